//! Per-letter information spectra and their exact n-fold convolution.

use serde::{Deserialize, Serialize};

use crate::channel::{Dmc, InputDist};
use crate::error::{Error, Result};

/// Relative tolerance for merging atoms after each convolution step.
pub const DEFAULT_MERGE_TOL: f64 = 1e-12;
/// Largest number of products formed in one convolution step.
pub const ATOM_CAP: usize = 1_000_000;
/// Atoms lighter than this are dropped; the lost mass shows in `mass_error`.
const PRUNE_MASS: f64 = 1e-250;

/// Which input letters feed the per-letter density.
#[derive(Debug, Clone, Copy)]
pub enum LetterSource<'a> {
    /// `X ~ P` independently per letter.
    Input(&'a InputDist),
    /// A fixed letter `x`.
    Letter(usize),
}

fn merge(mut atoms: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    let mut anchor = f64::NAN;
    for (v, p) in atoms {
        if p < PRUNE_MASS {
            continue;
        }
        match out.last_mut() {
            Some(last) if v - anchor <= tol * anchor.abs().max(1.0) => {
                let total = last.1 + p;
                last.0 = (last.0 * last.1 + v * p) / total;
                last.1 = total;
            }
            _ => {
                anchor = v;
                out.push((v, p));
            }
        }
    }
    out
}

/// Distinct values of `log W(y|x)/Q(y)` with their probabilities.
pub fn per_letter_spectrum(source: LetterSource<'_>, w: &Dmc, q: &[f64]) -> Result<Vec<(f64, f64)>> {
    if q.len() != w.num_outputs() {
        return Err(Error::DimensionMismatch("reference output length".into()));
    }
    let letters: Vec<(usize, f64)> = match source {
        LetterSource::Input(p) => {
            if p.len() != w.num_inputs() {
                return Err(Error::DimensionMismatch("input length".into()));
            }
            p.probs().iter().copied().enumerate().filter(|&(_, px)| px > 0.0).collect()
        }
        LetterSource::Letter(x) => {
            if x >= w.num_inputs() {
                return Err(Error::DimensionMismatch(format!("letter {x} out of range")));
            }
            vec![(x, 1.0)]
        }
    };
    let mut atoms = Vec::new();
    for (x, px) in letters {
        for (y, &wy) in w.row(x).iter().enumerate() {
            if wy > 0.0 {
                if q[y] <= 0.0 {
                    return Err(Error::Domination { input: x, output: y });
                }
                atoms.push(((wy / q[y]).ln(), px * wy));
            }
        }
    }
    Ok(merge(atoms, DEFAULT_MERGE_TOL))
}

fn convolve_pair(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> Result<Vec<(f64, f64)>> {
    let needed = a.len().saturating_mul(b.len());
    if needed > ATOM_CAP {
        return Err(Error::CapExceeded {
            needed: needed as u128,
            cap: ATOM_CAP as u128,
            hint: "use the Monte-Carlo estimator".into(),
        });
    }
    let mut out = Vec::with_capacity(needed);
    for &(va, pa) in a {
        for &(vb, pb) in b {
            out.push((va + vb, pa * pb));
        }
    }
    Ok(merge(out, tol))
}

/// Law of the sum of `n` independent copies of `atoms`.
pub fn convolve_n(atoms: &[(f64, f64)], n: usize, merge_tol: f64) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut acc = vec![(0.0, 1.0)];
    for _ in 0..n {
        acc = convolve_pair(&acc, atoms, merge_tol)?;
    }
    Ok(acc)
}

/// Tolerance of threshold comparisons on n-letter sums.
pub(crate) fn tie(t: f64) -> f64 {
    1e-10 * t.abs().max(1.0)
}

/// Exact law of an n-letter information density `Σ_i log W(y_i|x_i)/Q(y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCdf {
    /// Per-letter atoms (for a composition, the letter-averaged law).
    pub atoms: Vec<(f64, f64)>,
    pub n: usize,
    /// Atoms of the n-letter sum, ascending.
    pub aggregate: Vec<(f64, f64)>,
    /// `|1 − total mass|` of the aggregate.
    pub mass_error: f64,
    cumulative: Vec<f64>,
}

impl SpectrumCdf {
    fn from_aggregate(atoms: Vec<(f64, f64)>, n: usize, aggregate: Vec<(f64, f64)>) -> Self {
        let mut cumulative = Vec::with_capacity(aggregate.len());
        let mut acc = 0.0;
        for &(_, p) in &aggregate {
            acc += p;
            cumulative.push(acc);
        }
        Self {
            atoms,
            n,
            mass_error: (acc - 1.0).abs(),
            aggregate,
            cumulative,
        }
    }

    /// Sum of `n` i.i.d. letters.
    pub fn iid(atoms: Vec<(f64, f64)>, n: usize) -> Result<Self> {
        let agg = convolve_n(&atoms, n, DEFAULT_MERGE_TOL)?;
        Ok(Self::from_aggregate(atoms, n, agg))
    }

    /// Sum over letters with fixed multiplicities: `parts[j]` is repeated
    /// `count_j` times.
    pub fn from_parts(parts: &[(Vec<(f64, f64)>, usize)]) -> Result<Self> {
        let n: usize = parts.iter().map(|p| p.1).sum();
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        let mut agg = vec![(0.0, 1.0)];
        for (atoms, count) in parts {
            for _ in 0..*count {
                agg = convolve_pair(&agg, atoms, DEFAULT_MERGE_TOL)?;
            }
        }
        let letter: Vec<(f64, f64)> = parts
            .iter()
            .flat_map(|(a, c)| a.iter().map(move |&(v, p)| (v, p * *c as f64 / n as f64)))
            .collect();
        Ok(Self::from_aggregate(merge(letter, DEFAULT_MERGE_TOL), n, agg))
    }

    /// Law given directly as (sum value, probability) pairs, e.g. from type
    /// enumeration. `atoms` is left empty.
    pub(crate) fn from_sums(pairs: Vec<(f64, f64)>, n: usize) -> Self {
        Self::from_aggregate(Vec::new(), n, merge(pairs, DEFAULT_MERGE_TOL))
    }

    /// `Pr{sum <= t}`.
    pub fn tail_sum(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 1.0;
        }
        let cut = t + tie(t);
        let idx = self.aggregate.partition_point(|a| a.0 <= cut);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1].min(1.0)
        }
    }

    /// `Pr{sum / n <= t}`.
    pub fn tail(&self, t: f64) -> f64 {
        self.tail_sum(self.n as f64 * t)
    }

    pub fn mean(&self) -> f64 {
        self.aggregate.iter().map(|(v, p)| v * p).sum()
    }
}
