//! Search over the input simplex: grid enumeration, seeded starts, and a
//! projected pairwise-transfer local search. Shared by the first- and
//! second-order optimizers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{expected_cost, CostSpec};
use crate::error::{Error, Result};

/// Cap on the number of grid points enumerated by [`simplex_grid`].
pub const GRID_CAP: u128 = 2_000_000;

/// Resolution and effort of the outer supremum over input distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Grid resolution: points are multiples of `1/grid_steps`.
    pub grid_steps: usize,
    /// Largest input alphabet that is swept on the grid.
    pub grid_max_inputs: usize,
    /// Random starts used when the alphabet is too large for the grid.
    pub random_seeds: usize,
    /// Number of best candidates refined by local search.
    pub refine: usize,
    /// Local search stops once the transfer step falls below this.
    pub min_step: f64,
    /// Root seed for random starts.
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_steps: 32,
            grid_max_inputs: 4,
            random_seeds: 16,
            refine: 8,
            min_step: 1e-9,
            seed: 0,
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of points of the simplex grid with `steps` subdivisions on `k` letters.
pub fn grid_size(k: usize, steps: usize) -> u128 {
    binomial((steps + k - 1) as u128, (k - 1) as u128)
}

/// All compositions of `total` into `parts` non-negative integers, in
/// lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; parts];
    fn rec(idx: usize, remaining: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if idx + 1 == current.len() {
            current[idx] = remaining;
            out.push(current.clone());
            return;
        }
        for v in (0..=remaining).rev() {
            current[idx] = v;
            rec(idx + 1, remaining - v, current, out);
        }
    }
    if parts == 0 {
        return out;
    }
    rec(0, total, &mut current, &mut out);
    out
}

/// Every probability vector on `k` letters whose entries are multiples of `1/steps`.
pub fn simplex_grid(k: usize, steps: usize) -> Result<Vec<Vec<f64>>> {
    let size = grid_size(k, steps);
    if size > GRID_CAP {
        return Err(Error::CapExceeded {
            needed: size,
            cap: GRID_CAP,
            hint: "lower the grid resolution".into(),
        });
    }
    Ok(compositions(steps, k)
        .into_iter()
        .map(|c| c.into_iter().map(|v| v as f64 / steps as f64).collect())
        .collect())
}

/// Pulls `p` toward the cheapest letter until the budget holds.
pub(crate) fn project_to_budget(mut p: Vec<f64>, cost: &CostSpec) -> Vec<f64> {
    let Some(limit) = cost.binding_limit() else {
        return p;
    };
    let costs = cost.costs();
    let ec = expected_cost(&p, costs);
    if ec <= limit {
        return p;
    }
    let (cheap, &c0) = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty cost vector");
    // t·ec + (1 − t)·c0 = limit
    let t = ((limit - c0) / (ec - c0)).clamp(0.0, 1.0);
    for v in p.iter_mut() {
        *v *= t;
    }
    p[cheap] += 1.0 - t;
    p
}

/// Deterministic random starting points (flat Dirichlet), projected onto the budget.
pub(crate) fn random_starts(k: usize, count: usize, seed: u64, cost: &CostSpec) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut v: Vec<f64> = (0..k)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            project_to_budget(v, cost)
        })
        .collect()
}

/// Objective ordering used for deterministic reductions: larger value
/// first, then lexicographically smaller input.
pub(crate) fn better(a: (&[f64], f64), b: (&[f64], f64)) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    for (x, y) in a.0.iter().zip(b.0) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Pairwise-transfer hill climbing on the budget-feasible simplex.
pub(crate) fn local_search<F>(f: &F, start: Vec<f64>, cost: &CostSpec, min_step: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let k = start.len();
    let mut p = start;
    let mut best = f(&p);
    let mut step = 0.125;
    let mut evaluations = 0usize;
    let budget = 200_000usize;
    while step >= min_step && evaluations < budget {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || p[i] <= 0.0 {
                    continue;
                }
                let delta = step.min(p[i]);
                let mut cand = p.clone();
                cand[i] -= delta;
                cand[j] += delta;
                if cand[i] < 1e-15 {
                    cand[i] = 0.0;
                }
                if !cost.admits(&cand) {
                    continue;
                }
                evaluations += 1;
                let v = f(&cand);
                if v > best {
                    best = v;
                    p = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (p, best)
}

/// Result of a supremum search.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SearchOutcome {
    pub input: Vec<f64>,
    pub value: f64,
}

/// Maximizes `f` over budget-feasible inputs: evaluates the seeds, the
/// grid (or random starts for large alphabets), then refines the best few.
pub(crate) fn maximize<F>(
    f: &F,
    k: usize,
    cost: &CostSpec,
    seeds: Vec<Vec<f64>>,
    config: &SearchConfig,
) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut candidates = seeds;
    candidates.push(vec![1.0 / k as f64; k]);
    if k <= config.grid_max_inputs {
        candidates.extend(simplex_grid(k, config.grid_steps)?);
    } else {
        candidates.extend(random_starts(k, config.random_seeds, config.seed, cost));
    }
    candidates.retain(|p| cost.admits(p));
    if candidates.is_empty() {
        // the cheapest point mass is always feasible once gamma >= gamma_0
        candidates.push(project_to_budget(vec![1.0 / k as f64; k], cost));
    }

    let mut scored: Vec<(Vec<f64>, f64)> = candidates
        .into_par_iter()
        .map(|p| {
            let v = f(&p);
            (p, v)
        })
        .collect();
    scored.sort_by(|a, b| {
        if better((&a.0, a.1), (&b.0, b.1)) {
            std::cmp::Ordering::Less
        } else if better((&b.0, b.1), (&a.0, a.1)) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    scored.dedup_by(|a, b| a.0 == b.0);

    let top: Vec<Vec<f64>> = scored
        .iter()
        .take(config.refine.max(1))
        .map(|(p, _)| p.clone())
        .collect();
    let refined: Vec<(Vec<f64>, f64)> = top
        .into_par_iter()
        .map(|p| local_search(f, p, cost, config.min_step))
        .collect();

    let mut best = scored[0].clone();
    for r in refined {
        if better((&r.0, r.1), (&best.0, best.1)) {
            best = r;
        }
    }
    Ok(SearchOutcome {
        input: best.0,
        value: best.1,
    })
}
