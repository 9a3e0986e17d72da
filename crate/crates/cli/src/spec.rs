//! Channel spec files: UTF-8 JSON describing a finite mixture of DMCs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mixcap::{Budget, CostSpec, Dmc, MixedChannel};
use serde::Deserialize;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: f64,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub family: String,
    /// `(parameter, weight)` pairs.
    pub params: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpecFile {
    pub inputs: usize,
    pub outputs: usize,
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub channel: MixedChannel,
    pub cost: CostSpec,
}

fn check_prob(v: f64, field: &str) -> Result<()> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        bail!("{field}: entry {v} is not a probability");
    }
    Ok(())
}

fn check_rows(rows: &[Vec<f64>], inputs: usize, outputs: usize, field: &str) -> Result<()> {
    if rows.len() != inputs {
        bail!("{field}: has {} rows, expected {inputs}", rows.len());
    }
    for (x, row) in rows.iter().enumerate() {
        let here = format!("{field}.rows[{x}]");
        if row.len() != outputs {
            bail!("{here}: has {} entries, expected {outputs}", row.len());
        }
        for &v in row {
            check_prob(v, &here)?;
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            bail!("{here}: row sums to {s}, expected 1 within {SUM_TOL:e}");
        }
    }
    Ok(())
}

impl ChannelSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("spec file is not valid JSON for the channel schema")
    }

    /// Expands the generator, validates every field, and builds the channel.
    pub fn build(&self) -> Result<LoadedSpec> {
        if self.inputs == 0 || self.outputs == 0 {
            bail!("inputs/outputs: alphabet sizes must be positive");
        }
        let mut pairs: Vec<(f64, Vec<Vec<f64>>, String)> = Vec::new();
        for (k, a) in self.atoms.iter().enumerate() {
            let field = format!("atoms[{k}]");
            check_rows(&a.rows, self.inputs, self.outputs, &field)?;
            pairs.push((a.weight, a.rows.clone(), field));
        }
        if let Some(g) = &self.generator {
            if g.family != "bsc" {
                bail!("generator.family: unknown family {:?} (supported: \"bsc\")", g.family);
            }
            if self.inputs != 2 || self.outputs != 2 {
                bail!("generator.family: bsc needs inputs = outputs = 2");
            }
            for (k, &(p, w)) in g.params.iter().enumerate() {
                let field = format!("generator.params[{k}]");
                check_prob(p, &field)?;
                pairs.push((w, vec![vec![1.0 - p, p], vec![p, 1.0 - p]], field));
            }
        }
        if pairs.is_empty() {
            bail!("atoms: the spec defines no atoms");
        }
        for (w, _, field) in &pairs {
            if !w.is_finite() || *w <= 0.0 {
                bail!("{field}.weight: weight {w} must be positive");
            }
        }
        let total: f64 = pairs.iter().map(|p| p.0).sum();
        if (total - 1.0).abs() > SUM_TOL {
            bail!("weights: sum to {total}, expected 1 within {SUM_TOL:e}");
        }
        let mut built = Vec::with_capacity(pairs.len());
        for (w, rows, field) in pairs {
            let dmc = Dmc::new(rows).with_context(|| field.clone())?;
            built.push((w, dmc));
        }
        let channel = MixedChannel::from_pairs(built).context("atoms")?;

        let costs = match &self.costs {
            Some(c) if c.len() != self.inputs => bail!("costs: has {} entries, expected {}", c.len(), self.inputs),
            Some(c) => c.clone(),
            None => vec![0.0; self.inputs],
        };
        let budget = match self.gamma {
            Some(g) => Budget::Limit(g),
            None => Budget::Unconstrained,
        };
        let cost = CostSpec::new(costs, budget).context("costs")?;
        Ok(LoadedSpec { channel, cost })
    }
}

pub fn load_spec(path: &Path) -> Result<LoadedSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read spec file {}", path.display()))?;
    ChannelSpecFile::parse(&text)?.build()
}
