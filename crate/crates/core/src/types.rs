//! Method-of-types helpers: type classes, the cost-respecting quantized type,
//! the expurgated parameter space and the decomposition inequalities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{CostSpec, InputDist, MixedChannel};
use crate::error::{Error, Result};
use crate::fbl::enumerate::{joint_types, ln_product_mixture, LnFact, TypeTable};
use crate::search::{compositions, grid_size};

/// Cap on the number of types enumerated.
pub const TYPE_CAP: u128 = 1_000_000;

/// A type (composition) of length-`n` sequences over `X`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeClass {
    pub counts: Vec<usize>,
    pub n: usize,
}

impl TypeClass {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter("empty type".into()));
        }
        let n = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidParameter("type of a length-0 sequence".into()));
        }
        Ok(Self { counts, n })
    }

    pub fn to_dist(&self) -> InputDist {
        InputDist::from_numeric(self.counts.iter().map(|&c| c as f64 / self.n as f64).collect())
    }

    /// `log |T|`, the log of the number of sequences of this type.
    pub fn ln_size(&self) -> f64 {
        let f = LnFact::new(self.n);
        f.get(self.n) - self.counts.iter().map(|&c| f.get(c)).sum::<f64>()
    }

    /// A sequence of this type: each letter repeated by its count.
    pub fn sequence(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(x, &c)| std::iter::repeat_n(x, c))
            .collect()
    }
}

/// The type `P_n` approximating `p0` from below on every letter except the
/// cheapest, which takes the remainder. Keeps `E c <= Γ` whenever `p0` does.
pub fn quantized_type(p0: &InputDist, n: usize, cost: &CostSpec) -> Result<TypeClass> {
    cost.check_dims(p0.len())?;
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be positive".into()));
    }
    let mut order: Vec<usize> = (0..p0.len()).collect();
    // costs descending; stable, so ties keep index order
    order.sort_by(|&a, &b| cost.costs()[b].total_cmp(&cost.costs()[a]));
    let last = *order.last().expect("nonempty");
    let mut counts = vec![0usize; p0.len()];
    let mut used = 0;
    for &x in &order[..order.len() - 1] {
        let c = (n as f64 * p0.probs()[x]).floor() as usize;
        counts[x] = c;
        used += c;
    }
    counts[last] = n - used;
    TypeClass::new(counts)
}

/// Every type of length-`n` sequences over `k` letters; there are
/// `C(n+k−1, k−1)` of them.
pub fn enumerate_types(k: usize, n: usize) -> Result<Vec<TypeClass>> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidParameter("alphabet size and blocklength must be positive".into()));
    }
    let count = grid_size(k, n);
    if count > TYPE_CAP {
        return Err(Error::CapExceeded {
            needed: count,
            cap: TYPE_CAP,
            hint: "reduce n or the alphabet".into(),
        });
    }
    debug_assert!(count as f64 <= ((n + 1) as f64).powi(k as i32));
    Ok(compositions(n, k)
        .into_iter()
        .map(|counts| TypeClass { counts, n })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpurgationReport {
    pub member_mask: Vec<bool>,
    pub mass: f64,
    /// `1 − 2(n+1)^{|X||Y|} e^{−n^{1/4}}`, often negative.
    pub bound: f64,
    pub n: usize,
}

fn check_q_family(mixed: &MixedChannel, q: &[Vec<f64>]) -> Result<()> {
    if q.len() != mixed.len() || q.iter().any(|v| v.len() != mixed.num_outputs()) {
        return Err(Error::DimensionMismatch("one output distribution per component".into()));
    }
    Ok(())
}

/// Components in `Θ*_n`: `Q_θ^n(y) <= e^{n^{1/4}} Q^n(y)` for every output
/// type and `W_θ^n(y|x) <= e^{n^{1/4}} W^n(y|x)` for every joint type, with
/// `Q^n` the `w`-mixture of the products `Q_θ^n`.
pub fn expurgated_space(mixed: &MixedChannel, q: &[Vec<f64>], n: usize) -> Result<ExpurgationReport> {
    check_q_family(mixed, q)?;
    let (nx, ny) = (mixed.num_inputs(), mixed.num_outputs());
    let slack = (n as f64).powf(0.25);
    let output_types = enumerate_types(ny, n)?;
    let joints = joint_types(nx, ny, n)?;
    let weights = mixed.weights();
    let mixture: Vec<(f64, Vec<f64>)> = weights.iter().copied().zip(q.iter().cloned()).collect();

    let ln_q_mix: Vec<f64> = output_types.iter().map(|s| ln_product_mixture(&mixture, &s.counts)).collect();
    let ln_w = |theta: usize, k: &[usize]| -> f64 {
        let w = mixed.component(theta);
        let mut acc = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                let c = k[x * ny + y];
                if c > 0 {
                    acc += c as f64 * w.prob(x, y).ln();
                }
            }
        }
        acc
    };
    let joint_mix: Vec<f64> = joints
        .par_chunks(nx * ny)
        .map(|k| lse((0..mixed.len()).map(|t| weights[t].ln() + ln_w(t, k))))
        .collect();

    let member_mask: Vec<bool> = (0..mixed.len())
        .into_par_iter()
        .map(|t| {
            let outputs_ok = output_types.iter().zip(&ln_q_mix).all(|(s, &mix)| {
                let own = ln_product_mixture(&[(1.0, q[t].clone())], &s.counts);
                own <= slack + mix + 1e-12 * mix.abs().max(1.0)
            });
            outputs_ok
                && joints.chunks(nx * ny).zip(&joint_mix).all(|(k, &mix)| {
                    let own = ln_w(t, k);
                    own == f64::NEG_INFINITY || own <= slack + mix + 1e-12 * mix.abs().max(1.0)
                })
        })
        .collect();
    let mass = member_mask.iter().zip(&weights).filter(|(m, _)| **m).map(|(_, w)| w).sum();
    let bound = 1.0 - 2.0 * ((n + 1) as f64).powi((nx * ny) as i32) * (-slack).exp();
    Ok(ExpurgationReport { member_mask, mass, bound, n })
}

pub(crate) fn lse(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Which side of which decomposition inequality failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decomposition {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPoint {
    pub theta: usize,
    pub z: f64,
    pub kind: Decomposition,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub checked: usize,
    pub violations: Vec<DecompositionPoint>,
    pub members: Vec<bool>,
    pub z_grid: Vec<f64>,
}

impl DecompositionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks both decomposition inequalities exactly, for every member of
/// `Θ*_n` and every grid point. The input is uniform on the type class
/// `composition`; shifts are `γ/√n + n^{−3/4}` and the slack `e^{−√n γ}`.
pub fn decomposition_check(
    mixed: &MixedChannel,
    composition: &TypeClass,
    q: &[Vec<f64>],
    gamma: f64,
    z_points: usize,
) -> Result<DecompositionReport> {
    check_q_family(mixed, q)?;
    if composition.counts.len() != mixed.num_inputs() {
        return Err(Error::DimensionMismatch("composition length".into()));
    }
    if !(gamma > 0.0) || z_points < 2 {
        return Err(Error::InvalidParameter("gamma must be positive and the grid needs two points".into()));
    }
    let n = composition.n;
    let nf = n as f64;
    let shift = gamma / nf.sqrt() + nf.powf(-0.75);
    let slack = (-nf.sqrt() * gamma).exp();
    let members = expurgated_space(mixed, q, n)?.member_mask;

    let weights = mixed.weights();
    let all: Vec<(f64, Vec<f64>)> = weights.iter().copied().zip(q.iter().cloned()).collect();
    let table = TypeTable::for_composition(composition, mixed.num_outputs())?;
    let ln_py_mix = table.type_class_output(mixed)?;
    let ln_q_mix: Vec<f64> = table.col_sums.iter().map(|s| ln_product_mixture(&all, s)).collect();
    let ln_wmix: Vec<f64> = (0..table.len()).map(|i| table.ln_mixture_likelihood(mixed, i)).collect();

    struct Sides {
        theta: usize,
        probs: Vec<f64>,
        upper_lhs: Vec<f64>,
        upper_rhs: Vec<f64>,
        lower_lhs: Vec<f64>,
        lower_rhs: Vec<f64>,
    }
    let sides: Vec<Sides> = (0..mixed.len())
        .filter(|&t| members[t])
        .map(|t| {
            let wt = mixed.component(t);
            let own_py = table.type_class_output(&MixedChannel::singleton(wt.clone()))?;
            let own_q: Vec<f64> = table.col_sums.iter().map(|s| ln_product_mixture(&[(1.0, q[t].clone())], s)).collect();
            let mut sides = Sides {
                theta: t,
                probs: table.probabilities(wt),
                upper_lhs: Vec::with_capacity(table.len()),
                upper_rhs: Vec::with_capacity(table.len()),
                lower_lhs: Vec::with_capacity(table.len()),
                lower_rhs: Vec::with_capacity(table.len()),
            };
            for i in 0..table.len() {
                let c = table.column_index(i);
                let ln_wt = table.ln_likelihood(wt, i);
                sides.upper_lhs.push((ln_wmix[i] - ln_py_mix[c]) / nf);
                sides.upper_rhs.push((ln_wt - own_py[c]) / nf);
                sides.lower_lhs.push((ln_wmix[i] - ln_q_mix[c]) / nf);
                sides.lower_rhs.push((ln_wt - own_q[c]) / nf);
            }
            Ok(sides)
        })
        .collect::<Result<_>>()?;

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &sides {
        for (i, &p) in s.probs.iter().enumerate() {
            if p > 0.0 {
                for v in [s.upper_lhs[i], s.upper_rhs[i], s.lower_lhs[i], s.lower_rhs[i]] {
                    if v.is_finite() {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
    }
    if !lo.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = shift + 0.05 * (hi - lo).max(1e-3);
    let (lo, hi) = (lo - pad, hi + pad);
    let z_grid: Vec<f64> = (0..z_points).map(|i| lo + (hi - lo) * i as f64 / (z_points - 1) as f64).collect();

    let tail = TypeTable::tail;
    let mut violations = Vec::new();
    let mut checked = 0;
    for s in &sides {
        for &z in &z_grid {
            checked += 2;
            let lhs = tail(&s.probs, &s.upper_lhs, z);
            let rhs = tail(&s.probs, &s.upper_rhs, z + shift) + slack;
            if lhs > rhs + 1e-12 {
                violations.push(DecompositionPoint { theta: s.theta, z, kind: Decomposition::Upper, lhs, rhs });
            }
            let lhs = tail(&s.probs, &s.lower_lhs, z);
            let rhs = tail(&s.probs, &s.lower_rhs, z - shift) - slack;
            if lhs < rhs - 1e-12 {
                violations.push(DecompositionPoint { theta: s.theta, z, kind: Decomposition::Lower, lhs, rhs });
            }
        }
    }
    Ok(DecompositionReport { checked, violations, members, z_grid })
}
