//! Cost-constrained capacity of a single DMC.
//!
//! The Lagrangian `I(P,W) − λ E c(X_P)` is maximized by alternating
//! (Blahut–Arimoto) updates; an outer bisection on `λ` matches the budget.
//! The two bisection endpoints are mixed so the returned input meets the
//! budget exactly, which is safe because `I(·, W)` is concave.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    expected_cost, letter_divergences, mutual_info_raw, output_dist_raw, total_variation, Budget,
    CostSpec, Dmc, InputDist,
};
use crate::error::{Error, Result};
use crate::search::{random_starts, simplex_grid};

/// Default optimization tolerance in nats.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Iteration cap of the alternating maximization.
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Tolerance of the Kuhn–Tucker check in nats.
pub const KT_TOL: f64 = 1e-6;
/// Inputs below this mass are treated as off-support by [`kt_verify`].
pub const SUPPORT_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// `c_{θ,Γ}` in nats.
    pub capacity: f64,
    pub optimal_input: InputDist,
    /// `λ₀ >= 0`, nats per unit cost.
    pub multiplier: f64,
    /// Worst Kuhn–Tucker violation of the returned pair.
    pub kt_slack: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityAchievingSet {
    /// Finitely many representatives of the (possibly continuous) optimal set.
    pub representatives: Vec<InputDist>,
    /// The capacity-achieving output distribution, shared by all optima.
    pub cap_output: Vec<f64>,
    pub opt_tolerance: f64,
    pub capacity: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KtReport {
    pub passed: bool,
    /// Signed slack `D(W_x‖PW) − c − λ(c(x) − Γ)` of the worst letter.
    pub worst_slack: f64,
}

struct Lagrangian<'a> {
    w: &'a Dmc,
    costs: &'a [f64],
    lambda: f64,
    allowed: Vec<bool>,
}

impl Lagrangian<'_> {
    fn scores(&self, p: &[f64]) -> Vec<f64> {
        let q = output_dist_raw(p, self.w);
        letter_divergences(self.w, &q)
            .into_iter()
            .zip(self.costs)
            .map(|(d, c)| d - self.lambda * c)
            .collect()
    }

    fn step(&self, p: &[f64], scores: &[f64], top: f64, beta: f64) -> Vec<f64> {
        let mut next: Vec<f64> = p
            .iter()
            .zip(scores)
            .map(|(&px, &sx)| if px > 0.0 { px * (beta * (sx - top)).exp() } else { 0.0 })
            .collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        next
    }

    fn average(p: &[f64], scores: &[f64]) -> f64 {
        p.iter()
            .zip(scores)
            .filter(|(&px, _)| px > 0.0)
            .map(|(px, s)| px * s)
            .sum()
    }

    /// Returns the converged input and iteration count. Stops once the
    /// duality gap is below `tol` and every letter with mass above
    /// [`SUPPORT_MASS`] is within [`KT_TOL`] of the top score.
    ///
    /// The multiplicative update is raised to a power `beta >= 1` that grows
    /// while the Lagrangian keeps increasing; `beta = 1` is the plain
    /// Blahut–Arimoto step, which always increases it.
    fn maximize(&self, start: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
        let k = start.len();
        let mut p: Vec<f64> = start
            .iter()
            .zip(&self.allowed)
            .map(|(&v, &a)| if a { v } else { 0.0 })
            .collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);

        let mut scores = self.scores(&p);
        let mut beta = 1.0f64;
        let mut gap = f64::INFINITY;
        for it in 0..MAX_ITERATIONS {
            let mut top = f64::NEG_INFINITY;
            for x in 0..k {
                if self.allowed[x] {
                    top = top.max(scores[x]);
                }
            }
            let avg = Self::average(&p, &scores);
            gap = top - avg;
            let support_ok = (0..k).all(|x| p[x] <= SUPPORT_MASS || top - scores[x] <= 0.5 * KT_TOL);
            if gap <= tol && support_ok {
                return Ok((p, it));
            }
            if !top.is_finite() {
                // an unreachable output became reachable: restart that letter with mass
                for x in 0..k {
                    if self.allowed[x] && scores[x].is_infinite() {
                        p[x] = p[x].max(1.0 / k as f64);
                    }
                }
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                scores = self.scores(&p);
                continue;
            }
            if beta > 1.0 {
                let cand = self.step(&p, &scores, top, beta);
                let cand_scores = self.scores(&cand);
                if Self::average(&cand, &cand_scores) > avg {
                    p = cand;
                    scores = cand_scores;
                    beta = (beta * 2.0).min(1e6);
                    continue;
                }
                beta = (beta / 4.0).max(1.0);
            }
            p = self.step(&p, &scores, top, 1.0);
            scores = self.scores(&p);
            if beta == 1.0 {
                beta = 2.0;
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_ITERATIONS,
            gap,
        })
    }
}

fn validate(w: &Dmc, cost: &CostSpec, tol: f64) -> Result<()> {
    cost.check_dims(w.num_inputs())?;
    cost.check_feasible()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn uniform_over(allowed: &[bool]) -> Vec<f64> {
    let n = allowed.iter().filter(|&&a| a).count() as f64;
    allowed.iter().map(|&a| if a { 1.0 / n } else { 0.0 }).collect()
}

/// Largest multiplier that still makes every letter satisfy the KT inequality.
fn multiplier_from_kt(w: &Dmc, p: &[f64], costs: &[f64], gamma: f64) -> f64 {
    let cap = mutual_info_raw(p, w);
    let q = output_dist_raw(p, w);
    letter_divergences(w, &q)
        .into_iter()
        .zip(costs)
        .filter(|(_, &c)| c > gamma)
        .map(|(d, &c)| (d - cap) / (c - gamma))
        .fold(0.0, f64::max)
}

/// `max_{P : E c(X_P) <= Γ} I(P, W)` within `tol` nats.
pub fn constrained_capacity(w: &Dmc, cost: &CostSpec, tol: f64) -> Result<CapacityResult> {
    validate(w, cost, tol)?;
    let k = w.num_inputs();
    let costs = cost.costs();
    let all = vec![true; k];

    let finish = |p: Vec<f64>, lambda: f64, iterations: usize| -> Result<CapacityResult> {
        let input = InputDist::from_numeric(p);
        let report = kt_verify(w, &input, cost, lambda, KT_TOL)?;
        if !report.passed {
            return Err(Error::NoConvergence {
                iterations,
                gap: report.worst_slack,
            });
        }
        Ok(CapacityResult {
            capacity: mutual_info_raw(input.probs(), w),
            optimal_input: input,
            multiplier: lambda,
            kt_slack: report.worst_slack,
            iterations,
        })
    };

    let Some(gamma) = cost.binding_limit() else {
        let lag = Lagrangian {
            w,
            costs,
            lambda: 0.0,
            allowed: all.clone(),
        };
        let (p, it) = lag.maximize(&uniform_over(&all), tol)?;
        return finish(p, 0.0, it);
    };

    let g0 = cost.gamma_zero();
    if gamma <= g0 {
        // only the cheapest letters are usable
        let allowed: Vec<bool> = costs.iter().map(|&c| c <= g0).collect();
        let (p, it) = if allowed.iter().filter(|&&a| a).count() == 1 {
            (uniform_over(&allowed), 0)
        } else {
            let lag = Lagrangian {
                w,
                costs,
                lambda: 0.0,
                allowed: allowed.clone(),
            };
            lag.maximize(&uniform_over(&allowed), tol)?
        };
        let lambda = multiplier_from_kt(w, &p, costs, gamma);
        return finish(p, lambda, it);
    }

    let solve = |lambda: f64| -> Result<(Vec<f64>, usize)> {
        Lagrangian {
            w,
            costs,
            lambda,
            allowed: all.clone(),
        }
        .maximize(&uniform_over(&all), tol * 0.1)
    };

    let mut total_it = 0;
    let (p0, it) = solve(0.0)?;
    total_it += it;
    if expected_cost(&p0, costs) <= gamma {
        return finish(p0, 0.0, total_it);
    }

    let span = (gamma - g0).max(1e-300);
    let mut hi = ((w.num_inputs().min(w.num_outputs())) as f64).ln().max(1e-3) / span;
    let (mut p_hi, it) = solve(hi)?;
    total_it += it;
    let mut doublings = 0;
    while expected_cost(&p_hi, costs) > gamma {
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NoConvergence {
                iterations: total_it,
                gap: expected_cost(&p_hi, costs) - gamma,
            });
        }
        hi *= 2.0;
        let (p, it) = solve(hi)?;
        total_it += it;
        p_hi = p;
    }
    let (mut lo, mut p_lo) = (0.0, p0);
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (p, it) = solve(mid)?;
        total_it += it;
        if expected_cost(&p, costs) > gamma {
            lo = mid;
            p_lo = p;
        } else {
            hi = mid;
            p_hi = p;
        }
    }

    let c_lo = expected_cost(&p_lo, costs);
    let c_hi = expected_cost(&p_hi, costs);
    let mut p = p_hi.clone();
    if c_lo > c_hi {
        let alpha = ((gamma - c_hi) / (c_lo - c_hi)).clamp(0.0, 1.0);
        let mixed: Vec<f64> = p_lo
            .iter()
            .zip(&p_hi)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        if cost.admits(&mixed) && mutual_info_raw(&mixed, w) >= mutual_info_raw(&p_hi, w) {
            p = mixed;
        }
    }
    finish(p, hi, total_it)
}

/// Checks the Kuhn–Tucker conditions
/// `D(W_x ‖ PW) <= I(P,W) + λ₀ (c(x) − Γ) + tol` for every letter, with
/// equality on the support of `P`.
pub fn kt_verify(w: &Dmc, p: &InputDist, cost: &CostSpec, lambda0: f64, tol: f64) -> Result<KtReport> {
    if p.len() != w.num_inputs() {
        return Err(Error::DimensionMismatch("input length".into()));
    }
    cost.check_dims(w.num_inputs())?;
    let probs = p.probs();
    let cap = mutual_info_raw(probs, w);
    let q = output_dist_raw(probs, w);
    let d = letter_divergences(w, &q);
    let gamma = match cost.budget() {
        Budget::Limit(g) => Some(g),
        Budget::Unconstrained => None,
    };
    let mut passed = true;
    let mut worst = 0.0f64;
    let mut worst_violation = f64::NEG_INFINITY;
    for x in 0..w.num_inputs() {
        let shift = match gamma {
            Some(g) => lambda0 * (cost.costs()[x] - g),
            None => 0.0,
        };
        let slack = d[x] - cap - shift;
        let violation = if probs[x] > SUPPORT_MASS { slack.abs() } else { slack };
        if violation > tol {
            passed = false;
        }
        if violation > worst_violation {
            worst_violation = violation;
            worst = slack;
        }
    }
    Ok(KtReport {
        passed,
        worst_slack: worst,
    })
}

/// Representatives of the set of capacity-achieving inputs, found by
/// multi-start optimization and a sweep of the simplex grid with `grid`
/// subdivisions, deduplicated at total-variation radius `1/(2·grid)`.
pub fn capacity_achieving_set(w: &Dmc, cost: &CostSpec, opt_tol: f64, grid: usize) -> Result<CapacityAchievingSet> {
    if !(opt_tol > 0.0) || grid == 0 {
        return Err(Error::InvalidParameter("opt_tol must be positive and grid nonzero".into()));
    }
    let base = constrained_capacity(w, cost, opt_tol.min(DEFAULT_TOL))?;
    let k = w.num_inputs();
    let costs = cost.costs();

    let mut starts: Vec<Vec<f64>> = (0..k)
        .map(|x| {
            let mut v = vec![0.5 / k as f64; k];
            v[x] += 0.5;
            v
        })
        .collect();
    starts.extend(random_starts(k, 8, 0x5eed, &CostSpec::unconstrained(k)));

    let lambda = if cost.binding_limit().is_some() { base.multiplier } else { 0.0 };
    let restricted: Vec<bool> = match cost.binding_limit() {
        Some(g) if g <= cost.gamma_zero() => costs.iter().map(|&c| c <= g).collect(),
        _ => vec![true; k],
    };
    let local: Vec<Vec<f64>> = starts
        .into_par_iter()
        .filter_map(|s| {
            Lagrangian {
                w,
                costs,
                lambda,
                allowed: restricted.clone(),
            }
            .maximize(&s, opt_tol * 0.1)
            .ok()
            .map(|(p, _)| p)
        })
        .collect();

    let grid_points = if crate::search::grid_size(k, grid) <= crate::search::GRID_CAP {
        simplex_grid(k, grid)?
    } else {
        Vec::new()
    };

    let mut candidates = vec![base.optimal_input.probs().to_vec()];
    candidates.extend(local);
    candidates.extend(grid_points);
    let accepted: Vec<bool> = candidates
        .par_iter()
        .map(|p| cost.admits(p) && mutual_info_raw(p, w) >= base.capacity - opt_tol)
        .collect();

    let radius = 0.5 / grid as f64;
    let mut reps: Vec<InputDist> = Vec::new();
    for (p, ok) in candidates.into_iter().zip(accepted) {
        if !ok {
            continue;
        }
        if reps.iter().all(|r| total_variation(r.probs(), &p) > radius) {
            reps.push(InputDist::from_numeric(p));
        }
    }

    Ok(CapacityAchievingSet {
        cap_output: output_dist_raw(base.optimal_input.probs(), w),
        representatives: reps,
        opt_tolerance: opt_tol,
        capacity: base.capacity,
        multiplier: base.multiplier,
    })
}
