//! First-order (ε|Γ)-capacity: the quantile of a weighted set of rates and
//! its supremum over budget-feasible inputs.

use serde::{Deserialize, Serialize};

use crate::channel::{mutual_info_raw, CostSpec, InputDist, MixedChannel};
use crate::error::{Error, Result};
use crate::optimizer::{constrained_capacity, DEFAULT_TOL};
use crate::search::{maximize, SearchConfig};
use crate::well_ordered::component_capacities;

/// Values closer than this are treated as one atom of the quantile curve.
pub const TIE_ROUNDING: f64 = 1e-12;
/// Slack on comparisons of cumulative masses with ε.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileSource {
    PerInputIValues,
    ComponentCapacities,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub value: f64,
    /// `w{θ : value_θ < value}`.
    pub mass_strictly_below: f64,
    /// Weight of the atom at `value`.
    pub mass: f64,
}

/// The step function `R ↦ w{θ : value_θ < R}` of a finite weighted set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub breakpoints: Vec<Breakpoint>,
    pub source: QuantileSource,
}

/// A quantile together with the masses strictly below and at-or-below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileReport {
    pub value: f64,
    pub mass_below: f64,
    pub mass_at_or_below: f64,
    /// Index of the breakpoint holding `value`.
    pub index: usize,
}

fn round_key(v: f64) -> f64 {
    (v / TIE_ROUNDING).round() * TIE_ROUNDING
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps must lie in [0, 1), got {eps}")));
    }
    Ok(())
}

impl QuantileCurve {
    /// Builds the curve from parallel value and weight lists. Values equal
    /// after rounding to `1e-12` merge; the smallest original is kept.
    pub fn from_atoms(values: &[f64], weights: &[f64], source: QuantileSource) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::DimensionMismatch("quantile values and weights".into()));
        }
        let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints: Vec<Breakpoint> = Vec::new();
        let mut below = 0.0;
        for (v, w) in pairs {
            match breakpoints.last_mut() {
                Some(last) if round_key(last.value) == round_key(v) => last.mass += w,
                _ => {
                    if let Some(last) = breakpoints.last() {
                        below += last.mass;
                    }
                    breakpoints.push(Breakpoint {
                        value: v,
                        mass_strictly_below: below,
                        mass: w,
                    });
                }
            }
        }
        Ok(Self { breakpoints, source })
    }

    /// `w{θ : value_θ < r}`.
    pub fn mass_below(&self, r: f64) -> f64 {
        self.breakpoints.iter().filter(|b| b.value < r).map(|b| b.mass).sum()
    }

    /// `w{θ : value_θ <= r}`.
    pub fn mass_at_or_below(&self, r: f64) -> f64 {
        self.breakpoints.iter().filter(|b| b.value <= r).map(|b| b.mass).sum()
    }

    /// `sup{R : w{value < R} <= ε}`: the largest breakpoint whose strictly
    /// lower mass does not exceed `ε`.
    pub fn quantile(&self, eps: f64) -> QuantileReport {
        let index = self
            .breakpoints
            .iter()
            .rposition(|b| b.mass_strictly_below <= eps + MASS_TOL)
            .unwrap_or(0);
        let b = self.breakpoints[index];
        QuantileReport {
            value: b.value,
            mass_below: b.mass_strictly_below,
            mass_at_or_below: b.mass_strictly_below + b.mass,
            index,
        }
    }
}

fn i_values(mixed: &MixedChannel, p: &[f64]) -> Vec<f64> {
    mixed.atoms().iter().map(|a| mutual_info_raw(p, &a.channel)).collect()
}

fn quantile_raw(mixed: &MixedChannel, weights: &[f64], p: &[f64], eps: f64) -> QuantileReport {
    let vals = i_values(mixed, p);
    QuantileCurve::from_atoms(&vals, weights, QuantileSource::PerInputIValues)
        .expect("one value per atom")
        .quantile(eps)
}

/// The quantile curve of `θ ↦ I(P, W_θ)`.
pub fn rate_curve(mixed: &MixedChannel, p: &InputDist) -> Result<QuantileCurve> {
    if p.len() != mixed.num_inputs() {
        return Err(Error::DimensionMismatch("input length".into()));
    }
    QuantileCurve::from_atoms(&i_values(mixed, p.probs()), &mixed.weights(), QuantileSource::PerInputIValues)
}

/// `sup{R : w{θ : I(P, W_θ) < R} <= ε}`.
pub fn rate_quantile(mixed: &MixedChannel, p: &InputDist, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(rate_curve(mixed, p)?.quantile(eps).value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCapacityResult {
    /// `C_ε(Γ)` in nats.
    pub capacity: f64,
    pub argmax_input: InputDist,
    /// Component whose capacity equals `C_ε(Γ)`; set on the well-ordered path.
    pub achieving_component: Option<usize>,
    /// `w{I < C_ε}` at the returned input.
    pub mass_below: f64,
    /// `w{I <= C_ε}` at the returned input.
    pub mass_at_or_below: f64,
}

/// Optimal inputs of every component, used to seed input searches.
pub(crate) fn component_optima(mixed: &MixedChannel, cost: &CostSpec) -> Result<Vec<Vec<f64>>> {
    mixed
        .atoms()
        .iter()
        .map(|a| constrained_capacity(&a.channel, cost, DEFAULT_TOL).map(|r| r.optimal_input.probs().to_vec()))
        .collect()
}

/// `C_ε(Γ) = sup_P sup{R : w{I(P, W_θ) < R} <= ε}`, searched over feasible
/// inputs. The result is the best value found at the configured resolution.
pub fn eps_capacity(mixed: &MixedChannel, cost: &CostSpec, eps: f64, search: &SearchConfig) -> Result<EpsCapacityResult> {
    check_eps(eps)?;
    cost.check_dims(mixed.num_inputs())?;
    cost.check_feasible()?;
    let weights = mixed.weights();
    let seeds = component_optima(mixed, cost)?;
    let f = |p: &[f64]| quantile_raw(mixed, &weights, p, eps).value;
    let best = maximize(&f, mixed.num_inputs(), cost, seeds, search)?;
    let q = quantile_raw(mixed, &weights, &best.input, eps);
    Ok(EpsCapacityResult {
        capacity: q.value.max(0.0),
        argmax_input: InputDist::from_numeric(best.input),
        achieving_component: None,
        mass_below: q.mass_below,
        mass_at_or_below: q.mass_at_or_below,
    })
}

/// `C_ε(Γ)` of a Γ-well-ordered mixture: the ε-quantile of the component
/// capacities. Well-orderedness is the caller's responsibility.
pub fn eps_capacity_well_ordered(mixed: &MixedChannel, cost: &CostSpec, eps: f64) -> Result<EpsCapacityResult> {
    check_eps(eps)?;
    let comps = component_capacities(mixed, cost)?;
    let caps: Vec<f64> = comps.iter().map(|r| r.capacity).collect();
    let q = QuantileCurve::from_atoms(&caps, &mixed.weights(), QuantileSource::ComponentCapacities)?.quantile(eps);
    let theta = caps
        .iter()
        .position(|&c| round_key(c) == round_key(q.value))
        .expect("quantile is one of the capacities");
    Ok(EpsCapacityResult {
        capacity: q.value,
        argmax_input: comps[theta].optimal_input.clone(),
        achieving_component: Some(theta),
        mass_below: q.mass_below,
        mass_at_or_below: q.mass_at_or_below,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Budget, Dmc};
    use proptest::prelude::*;

    fn h(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    fn bsc_cap(p: f64) -> f64 {
        2f64.ln() - h(p)
    }

    fn pair() -> MixedChannel {
        MixedChannel::from_pairs([(0.5, Dmc::bsc(0.05).unwrap()), (0.5, Dmc::bsc(0.2).unwrap())]).unwrap()
    }

    #[test]
    fn two_atom_quantile() {
        let c = QuantileCurve::from_atoms(&[0.3, 0.1], &[0.5, 0.5], QuantileSource::PerInputIValues).unwrap();
        assert_eq!(c.quantile(0.3).value, 0.1);
        assert_eq!(c.quantile(0.5).value, 0.3);
        assert_eq!(c.quantile(0.0).value, 0.1);
        let r = c.quantile(0.3);
        assert_eq!((r.mass_below, r.mass_at_or_below), (0.0, 0.5));
    }

    #[test]
    fn near_ties_merge() {
        let c = QuantileCurve::from_atoms(&[0.2, 0.2 + 1e-14, 0.5], &[0.3, 0.3, 0.4], QuantileSource::ComponentCapacities)
            .unwrap();
        assert_eq!(c.breakpoints.len(), 2);
        assert!((c.breakpoints[0].mass - 0.6).abs() < 1e-15);
        assert_eq!(c.quantile(0.59).value, 0.2);
        assert_eq!(c.quantile(0.6).value, 0.5);
    }

    #[test]
    fn singleton_quantile_is_mutual_information() {
        let w = Dmc::bsc(0.11).unwrap();
        let m = MixedChannel::singleton(w.clone());
        let p = InputDist::new(vec![0.3, 0.7]).unwrap();
        for eps in [0.0, 0.3, 0.99] {
            assert_eq!(rate_quantile(&m, &p, eps).unwrap(), mutual_info_raw(p.probs(), &w));
        }
        assert!(rate_quantile(&m, &p, 1.0).is_err());
    }

    #[test]
    fn singleton_eps_capacity() {
        let m = MixedChannel::singleton(Dmc::bsc(0.11).unwrap());
        let r = eps_capacity(&m, &CostSpec::unconstrained(2), 0.3, &SearchConfig::default()).unwrap();
        assert!((r.capacity - bsc_cap(0.11)).abs() < 1e-9);
    }

    #[test]
    fn bsc_pair_eps_capacity() {
        let m = pair();
        let unc = CostSpec::unconstrained(2);
        let cfg = SearchConfig::default();
        for (eps, want) in [(0.0, bsc_cap(0.2)), (0.25, bsc_cap(0.2)), (0.75, bsc_cap(0.05))] {
            let r = eps_capacity(&m, &unc, eps, &cfg).unwrap();
            assert!((r.capacity - want).abs() < 1e-9, "eps {eps}: {} vs {want}", r.capacity);
            let wo = eps_capacity_well_ordered(&m, &unc, eps).unwrap();
            assert!((wo.capacity - want).abs() < 1e-9);
        }
        assert_eq!(eps_capacity_well_ordered(&m, &unc, 0.25).unwrap().achieving_component, Some(1));
    }

    #[test]
    fn three_bscs_well_ordered_quantile() {
        let m = MixedChannel::from_pairs([0.05, 0.11, 0.2].map(|p| (1.0 / 3.0, Dmc::bsc(p).unwrap()))).unwrap();
        let r = eps_capacity_well_ordered(&m, &CostSpec::unconstrained(2), 0.4).unwrap();
        assert!((r.capacity - bsc_cap(0.11)).abs() < 1e-9);
        assert_eq!(r.achieving_component, Some(1));
    }

    #[test]
    fn budget_above_max_cost_matches_unconstrained() {
        let m = MixedChannel::from_pairs([
            (0.4, Dmc::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap()),
            (0.6, Dmc::z_channel(0.3).unwrap()),
        ])
        .unwrap();
        let cfg = SearchConfig::default();
        let loose = CostSpec::new(vec![1.0, 0.0], Budget::Limit(1.0)).unwrap();
        let unc = CostSpec::new(vec![1.0, 0.0], Budget::Unconstrained).unwrap();
        let a = eps_capacity(&m, &loose, 0.5, &cfg).unwrap();
        let b = eps_capacity(&m, &unc, 0.5, &cfg).unwrap();
        assert_eq!(a.capacity, b.capacity);
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_eps(
            vals in prop::collection::vec(0.0f64..1.0, 1..6),
            raw in prop::collection::vec(0.01f64..1.0, 6),
            e1 in 0.0f64..1.0, e2 in 0.0f64..1.0,
        ) {
            let w: Vec<f64> = raw[..vals.len()].to_vec();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            let c = QuantileCurve::from_atoms(&vals, &w, QuantileSource::PerInputIValues).unwrap();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(c.quantile(lo).value <= c.quantile(hi).value);
            let last = c.breakpoints.last().unwrap();
            prop_assert!((last.mass_strictly_below + last.mass - 1.0).abs() < 1e-9);
            for pair in c.breakpoints.windows(2) {
                prop_assert!(pair[0].value < pair[1].value);
                prop_assert!(pair[0].mass_strictly_below <= pair[1].mass_strictly_below);
            }
        }
    }

    fn arb_bsc_family() -> impl Strategy<Value = MixedChannel> {
        (prop::collection::vec(0.01f64..0.49, 1..4), prop::collection::vec(0.1f64..1.0, 4)).prop_map(|(ps, raw)| {
            let total: f64 = raw[..ps.len()].iter().sum();
            MixedChannel::from_pairs(ps.iter().zip(&raw).map(|(&p, &r)| (r / total, Dmc::bsc(p).unwrap()))).unwrap()
        })
    }

    fn arb_binary_mixture() -> impl Strategy<Value = MixedChannel> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..1.0), 1..4).prop_map(|atoms| {
            let total: f64 = atoms.iter().map(|a| a.2).sum();
            MixedChannel::from_pairs(
                atoms
                    .iter()
                    .map(|&(a, b, r)| (r / total, Dmc::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap())),
            )
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn eps_capacity_monotone(m in arb_binary_mixture(), e1 in 0.0f64..0.99, e2 in 0.0f64..0.99, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let cfg = SearchConfig::default();
            let (e1, e2) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let free = CostSpec::unconstrained(2);
            let a = eps_capacity(&m, &free, e1, &cfg).unwrap().capacity;
            let b = eps_capacity(&m, &free, e2, &cfg).unwrap().capacity;
            prop_assert!(a <= b + 1e-4);
            let at = |t: f64| {
                let cost = CostSpec::new(vec![1.0, 0.0], Budget::Limit(t)).unwrap();
                eps_capacity(&m, &cost, e1, &cfg).unwrap().capacity
            };
            prop_assert!(at(t1) <= at(t2) + 1e-4);
        }

        #[test]
        fn well_ordered_route_matches_full_sup(m in arb_bsc_family(), eps in 0.0f64..0.99) {
            let free = CostSpec::unconstrained(2);
            let full = eps_capacity(&m, &free, eps, &SearchConfig::default()).unwrap().capacity;
            let reduced = eps_capacity_well_ordered(&m, &free, eps).unwrap().capacity;
            prop_assert!((full - reduced).abs() <= 1e-4, "{} {}", full, reduced);
        }
    }
}
