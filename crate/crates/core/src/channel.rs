//! Channels, input distributions, costs and single-letter information measures.
//!
//! All logarithms are natural; every quantity is in nats. The convention
//! `0 · log 0 = 0` is applied throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums and probability-vector sums at ingestion.
pub const PROB_TOL: f64 = 1e-12;

/// Slack allowed on `E c(X) <= gamma` when testing feasibility.
pub const COST_TOL: f64 = 1e-12;

fn check_prob_vector(v: &[f64], context: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidDistribution {
            context: context.to_string(),
            reason: "empty vector".into(),
        });
    }
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution {
                context: context.to_string(),
                reason: format!("entry {i} = {p} is outside [0, 1]"),
            });
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution {
            context: context.to_string(),
            reason: format!("entries sum to {sum:.15}, not 1"),
        });
    }
    Ok(())
}

/// A discrete memoryless channel `W(y|x)` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dmc {
    num_inputs: usize,
    num_outputs: usize,
    rows: Vec<Vec<f64>>,
}

impl Dmc {
    /// Builds a channel from its transition rows. Rows that do not sum to
    /// one within [`PROB_TOL`] are rejected, never renormalized.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidChannel("channel has no input letters".into()));
        }
        let num_outputs = rows[0].len();
        if num_outputs == 0 {
            return Err(Error::InvalidChannel("channel has no output letters".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != num_outputs {
                return Err(Error::InvalidChannel(format!(
                    "row {x} has {} entries, expected {num_outputs}",
                    row.len()
                )));
            }
            check_prob_vector(row, &format!("channel row {x}"))?;
        }
        Ok(Self {
            num_inputs: rows.len(),
            num_outputs,
            rows,
        })
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("BSC crossover {p} outside [0, 1]")));
        }
        Self::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Z-channel: input 0 is received perfectly, input 1 flips to 0 with probability `q`.
    pub fn z_channel(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!("Z-channel parameter {q} outside [0, 1]")));
        }
        Self::new(vec![vec![1.0, 0.0], vec![q, 1.0 - q]])
    }

    /// Noiseless channel on `k` letters.
    pub fn identity(k: usize) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|x| (0..k).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    /// Same channel with output symbols permuted: new output `j` is old output `perm[j]`.
    pub fn relabel_outputs(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_outputs {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        Self::new(
            self.rows
                .iter()
                .map(|row| perm.iter().map(|&j| row[j]).collect())
                .collect(),
        )
    }
}

/// A probability distribution on the input alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDist {
    probs: Vec<f64>,
}

impl InputDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_prob_vector(&probs, "input distribution")?;
        Ok(Self { probs })
    }

    /// Wraps a vector produced by an iterative algorithm: clips rounding
    /// noise below zero and rescales by the (near-one) sum.
    pub(crate) fn from_numeric(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        debug_assert!(sum > 0.0);
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Self { probs }
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn point_mass(k: usize, at: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn expected_cost(&self, cost: &CostSpec) -> f64 {
        expected_cost(&self.probs, cost.costs())
    }

    /// Total-variation distance `½ Σ |p − q|`.
    pub fn total_variation(&self, other: &InputDist) -> f64 {
        total_variation(&self.probs, &other.probs)
    }
}

pub(crate) fn expected_cost(p: &[f64], costs: &[f64]) -> f64 {
    p.iter().zip(costs).map(|(a, c)| a * c).sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Budget on the average per-letter cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    Unconstrained,
    Limit(f64),
}

/// Per-letter costs `c(x) >= 0` and a budget `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    costs: Vec<f64>,
    budget: Budget,
}

impl CostSpec {
    pub fn new(costs: Vec<f64>, budget: Budget) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidCost("empty cost vector".into()));
        }
        for (x, &c) in costs.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidCost(format!("cost of letter {x} is {c}")));
            }
        }
        if let Budget::Limit(g) = budget {
            if !g.is_finite() {
                return Err(Error::InvalidCost(format!("budget {g} is not finite")));
            }
        }
        Ok(Self { costs, budget })
    }

    /// Zero costs and no budget.
    pub fn unconstrained(num_inputs: usize) -> Self {
        Self {
            costs: vec![0.0; num_inputs],
            budget: Budget::Unconstrained,
        }
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn with_budget(&self, budget: Budget) -> Result<Self> {
        Self::new(self.costs.clone(), budget)
    }

    /// Smallest letter cost; no budget below it is feasible.
    pub fn gamma_zero(&self) -> f64 {
        self.costs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn gamma_max(&self) -> f64 {
        self.costs.iter().cloned().fold(0.0, f64::max)
    }

    /// The budget that actually binds: `None` when unconstrained or when
    /// every letter already satisfies it.
    pub fn binding_limit(&self) -> Option<f64> {
        match self.budget {
            Budget::Unconstrained => None,
            Budget::Limit(g) if g >= self.gamma_max() => None,
            Budget::Limit(g) => Some(g),
        }
    }

    pub fn check_feasible(&self) -> Result<()> {
        if let Budget::Limit(g) = self.budget {
            let g0 = self.gamma_zero();
            if g < g0 {
                return Err(Error::Infeasible {
                    gamma: g,
                    gamma_zero: g0,
                });
            }
        }
        Ok(())
    }

    pub fn check_dims(&self, num_inputs: usize) -> Result<()> {
        if self.costs.len() != num_inputs {
            return Err(Error::DimensionMismatch(format!(
                "{} costs for {} input letters",
                self.costs.len(),
                num_inputs
            )));
        }
        Ok(())
    }

    /// Whether `p` meets the budget up to [`COST_TOL`].
    pub fn admits(&self, p: &[f64]) -> bool {
        match self.binding_limit() {
            None => true,
            Some(g) => expected_cost(p, &self.costs) <= g + COST_TOL,
        }
    }
}

/// One component of a mixed channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub channel: Dmc,
}

/// A finite mixture of DMCs sharing input and output alphabets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedChannel {
    atoms: Vec<Atom>,
}

impl MixedChannel {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::InvalidChannel("mixture has no components".into()));
        };
        let (nx, ny) = (first.channel.num_inputs(), first.channel.num_outputs());
        let mut total = 0.0;
        for (k, atom) in atoms.iter().enumerate() {
            if !(atom.weight > 0.0 && atom.weight <= 1.0) {
                return Err(Error::InvalidChannel(format!(
                    "component {k} has weight {} outside (0, 1]",
                    atom.weight
                )));
            }
            if atom.channel.num_inputs() != nx || atom.channel.num_outputs() != ny {
                return Err(Error::DimensionMismatch(format!(
                    "component {k} is {}x{}, expected {nx}x{ny}",
                    atom.channel.num_inputs(),
                    atom.channel.num_outputs()
                )));
            }
            total += atom.weight;
        }
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidChannel(format!(
                "component weights sum to {total:.15}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn singleton(channel: Dmc) -> Self {
        Self {
            atoms: vec![Atom {
                weight: 1.0,
                channel,
            }],
        }
    }

    /// Mixture from `(weight, channel)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, Dmc)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(weight, channel)| Atom { weight, channel })
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn component(&self, k: usize) -> &Dmc {
        &self.atoms[k].channel
    }

    pub fn num_inputs(&self) -> usize {
        self.atoms[0].channel.num_inputs()
    }

    pub fn num_outputs(&self) -> usize {
        self.atoms[0].channel.num_outputs()
    }
}

/// Single-letter statistics of the information density at input `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoStats {
    /// `I(P, W)`.
    pub mutual_info: f64,
    /// `V_P`: conditional variance with the reference output `PW`.
    pub dispersion: f64,
    /// Conditional variance for a composition against an arbitrary
    /// reference output; equals `dispersion` when the reference is `PW`.
    pub comp_variance: f64,
    /// `Σ_x P(x) E|i(x;Y) − D(W_x‖Q)|³`.
    pub third_abs_moment: f64,
}

impl InfoStats {
    /// Statistics with the reference output `Q = PW`.
    pub fn compute(p: &InputDist, w: &Dmc) -> Result<Self> {
        let q = output_distribution(p, w)?;
        let mut stats = Self::with_reference(p, w, &q)?;
        stats.mutual_info = mutual_information(p, w)?;
        Ok(stats)
    }

    /// Statistics of the per-letter density `log W(y|x)/Q(y)` for a
    /// composition `p` and a reference output `q`. `mutual_info` is `I(P,W)`.
    pub fn with_reference(p: &InputDist, w: &Dmc, q: &[f64]) -> Result<Self> {
        check_dims(p, w)?;
        if q.len() != w.num_outputs() {
            return Err(Error::DimensionMismatch("reference output length".into()));
        }
        let (mut var, mut third) = (0.0, 0.0);
        for (x, &px) in p.probs().iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let row = w.row(x);
            let mut mean = 0.0;
            for (y, &wy) in row.iter().enumerate() {
                if wy > 0.0 {
                    if q[y] <= 0.0 {
                        return Err(Error::Domination { input: x, output: y });
                    }
                    mean += wy * (wy / q[y]).ln();
                }
            }
            for (y, &wy) in row.iter().enumerate() {
                if wy > 0.0 {
                    let d = (wy / q[y]).ln() - mean;
                    var += px * wy * d * d;
                    third += px * wy * d.abs().powi(3);
                }
            }
        }
        Ok(Self {
            mutual_info: mutual_information(p, w)?,
            dispersion: channel_dispersion(p, w)?,
            comp_variance: var,
            third_abs_moment: third,
        })
    }
}

/// Slack parameters of the finite-blocklength bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackParams {
    /// `eta > 0`, per-letter slack in nats.
    pub eta: f64,
    /// `gamma > 0`, the `1/√n`-scale slack of the decomposition lemmas.
    pub gamma_slack: f64,
    /// Threshold `z_n` in nats per letter.
    pub threshold: f64,
}

impl SlackParams {
    pub fn new(eta: f64, gamma_slack: f64, threshold: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        if !(gamma_slack > 0.0) || !gamma_slack.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma slack must be positive, got {gamma_slack}"
            )));
        }
        Ok(Self {
            eta,
            gamma_slack,
            threshold,
        })
    }

    /// `eta = 1/√n`, `gamma = 1`.
    pub fn default_for(n: usize) -> Self {
        Self {
            eta: 1.0 / (n as f64).sqrt(),
            gamma_slack: 1.0,
            threshold: 0.0,
        }
    }
}

fn check_dims(p: &InputDist, w: &Dmc) -> Result<()> {
    if p.len() != w.num_inputs() {
        return Err(Error::DimensionMismatch(format!(
            "input distribution has {} entries, channel has {} inputs",
            p.len(),
            w.num_inputs()
        )));
    }
    Ok(())
}

/// `PW(y) = Σ_x P(x) W(y|x)`.
pub fn output_distribution(p: &InputDist, w: &Dmc) -> Result<Vec<f64>> {
    check_dims(p, w)?;
    Ok(output_dist_raw(p.probs(), w))
}

pub(crate) fn output_dist_raw(p: &[f64], w: &Dmc) -> Vec<f64> {
    let mut q = vec![0.0; w.num_outputs()];
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (qy, &wy) in q.iter_mut().zip(w.row(x)) {
            *qy += px * wy;
        }
    }
    q
}

/// `I(P, W)` in nats.
pub fn mutual_information(p: &InputDist, w: &Dmc) -> Result<f64> {
    check_dims(p, w)?;
    Ok(mutual_info_raw(p.probs(), w))
}

pub(crate) fn mutual_info_raw(p: &[f64], w: &Dmc) -> f64 {
    let q = output_dist_raw(p, w);
    let mut total = 0.0;
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (y, &wy) in w.row(x).iter().enumerate() {
            if wy > 0.0 {
                total += px * wy * (wy / q[y]).ln();
            }
        }
    }
    total.max(0.0)
}

/// `D(p ‖ q)` in nats; `f64::INFINITY` when `p` is not absolutely
/// continuous with respect to `q`.
pub fn divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "divergence between vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(divergence_raw(p, q))
}

pub(crate) fn divergence_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total
}

/// `D(W(·|x) ‖ Q)` for every input letter.
pub(crate) fn letter_divergences(w: &Dmc, q: &[f64]) -> Vec<f64> {
    (0..w.num_inputs())
        .map(|x| divergence_raw(w.row(x), q))
        .collect()
}

/// Channel dispersion `V_P`: the conditional variance of the information
/// density `log W(Y|X)/PW(Y)` around the letter divergences.
pub fn channel_dispersion(p: &InputDist, w: &Dmc) -> Result<f64> {
    check_dims(p, w)?;
    Ok(dispersion_raw(p.probs(), w))
}

pub(crate) fn dispersion_raw(p: &[f64], w: &Dmc) -> f64 {
    let q = output_dist_raw(p, w);
    let mut v = 0.0;
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let row = w.row(x);
        let d = divergence_raw(row, &q);
        for (y, &wy) in row.iter().enumerate() {
            if wy > 0.0 {
                let t = (wy / q[y]).ln() - d;
                v += px * wy * t * t;
            }
        }
    }
    v.max(0.0)
}
