//! Γ-well-orderedness of a finite mixture and the capacity spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{mutual_info_raw, CostSpec, Dmc, InputDist, MixedChannel};
use crate::error::{Error, Result};
use crate::first_order::{QuantileCurve, QuantileSource};
use crate::optimizer::{capacity_achieving_set, constrained_capacity, CapacityResult, DEFAULT_TOL};
use crate::search::simplex_grid;

/// Default tolerance for comparing component capacities.
pub const DEFAULT_ORDER_TOL: f64 = 1e-7;
/// Default resolution of the representative sweep.
pub const DEFAULT_GRID: usize = 32;

/// The relation that failed for a pair `(θ, θ')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `c_θ = c_θ'` requires `I(P, W_θ') = c_θ`.
    EqualAtTie,
    /// `c_θ < c_θ'` requires `I(P, W_θ') > c_θ`.
    StrictlyAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub theta: usize,
    pub theta_prime: usize,
    pub input: InputDist,
    pub observed: f64,
    pub required: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellOrderReport {
    pub is_well_ordered: bool,
    pub violations: Vec<Violation>,
    /// `(c_θ, w{θ' : c_θ' <= c_θ})`, ascending.
    pub capacity_spectrum: Vec<(f64, f64)>,
    pub tolerance: f64,
    /// Human-readable scope of the check.
    pub coverage: String,
}

pub(crate) fn component_capacities(mixed: &MixedChannel, cost: &CostSpec) -> Result<Vec<CapacityResult>> {
    cost.check_dims(mixed.num_inputs())?;
    cost.check_feasible()?;
    mixed
        .atoms()
        .par_iter()
        .map(|a| constrained_capacity(&a.channel, cost, DEFAULT_TOL))
        .collect()
}

/// Component capacities `c_{θ,Γ}` with their weights, ascending, equal
/// values (after rounding to `1e-12`) merged.
pub fn capacity_spectrum(mixed: &MixedChannel, cost: &CostSpec) -> Result<Vec<(f64, f64)>> {
    let caps: Vec<f64> = component_capacities(mixed, cost)?.iter().map(|r| r.capacity).collect();
    let curve = QuantileCurve::from_atoms(&caps, &mixed.weights(), QuantileSource::ComponentCapacities)?;
    Ok(curve.breakpoints.iter().map(|b| (b.value, b.mass)).collect())
}

/// [`check_well_ordered_at`] with the default representative grid.
pub fn check_well_ordered(mixed: &MixedChannel, cost: &CostSpec, tol: f64) -> Result<WellOrderReport> {
    check_well_ordered_at(mixed, cost, tol, DEFAULT_GRID)
}

/// Tests both clauses of Γ-well-orderedness on the representatives of each
/// `Π_{θ,Γ}`. A pass means no violation was found at this resolution.
pub fn check_well_ordered_at(mixed: &MixedChannel, cost: &CostSpec, tol: f64, grid: usize) -> Result<WellOrderReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let caps: Vec<f64> = component_capacities(mixed, cost)?.iter().map(|r| r.capacity).collect();
    let sets = mixed
        .atoms()
        .par_iter()
        .map(|a| capacity_achieving_set(&a.channel, cost, DEFAULT_TOL, grid))
        .collect::<Result<Vec<_>>>()?;

    let k = mixed.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|t| (0..k).map(move |u| (t, u))).filter(|(t, u)| t != u).collect();
    let violations: Vec<Violation> = pairs
        .par_iter()
        .flat_map_iter(|&(t, u)| {
            let (ct, cu) = (caps[t], caps[u]);
            let w_u = mixed.component(u);
            sets[t].representatives.iter().filter_map(move |p| {
                let observed = mutual_info_raw(p.probs(), w_u);
                let required = if (ct - cu).abs() <= tol {
                    ((observed - ct).abs() > tol).then_some(Relation::EqualAtTie)
                } else if ct < cu - tol {
                    (observed <= ct + tol).then_some(Relation::StrictlyAbove)
                } else {
                    None
                };
                required.map(|required| Violation {
                    theta: t,
                    theta_prime: u,
                    input: p.clone(),
                    observed,
                    required,
                })
            })
        })
        .collect();

    let mut capacity_spectrum = Vec::new();
    let mut cum = 0.0;
    let curve = QuantileCurve::from_atoms(&caps, &mixed.weights(), QuantileSource::ComponentCapacities)?;
    for b in &curve.breakpoints {
        cum += b.mass;
        capacity_spectrum.push((b.value, cum));
    }
    let reps: usize = sets.iter().map(|s| s.representatives.len()).sum();
    let coverage = if violations.is_empty() {
        format!("no violation found at resolution 1/{grid} ({reps} representatives, finite mixture so closedness holds)")
    } else {
        format!("{} violation(s) among {reps} representatives at resolution 1/{grid}", violations.len())
    };
    Ok(WellOrderReport {
        is_well_ordered: violations.is_empty(),
        violations,
        capacity_spectrum,
        tolerance: tol,
        coverage,
    })
}

/// Grid check of `I(P, w1) <= I(P, w2) + 1e-9` for all `P` with entries in
/// multiples of `1/grid`. A necessary condition for `w2` to be more capable.
pub fn more_capable(w1: &Dmc, w2: &Dmc, grid: usize) -> Result<bool> {
    if w1.num_inputs() != w2.num_inputs() {
        return Err(Error::DimensionMismatch("channels need the same input alphabet".into()));
    }
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be positive".into()));
    }
    let points = simplex_grid(w1.num_inputs(), grid)?;
    Ok(points
        .par_iter()
        .all(|p| mutual_info_raw(p, w1) <= mutual_info_raw(p, w2) + 1e-9))
}
