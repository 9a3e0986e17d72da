//! Second-order rates: the `G_w` functional, its feasibility boundary in
//! `S`, and the exact formula for well-ordered mixtures.

use serde::{Deserialize, Serialize};

use crate::channel::{dispersion_raw, mutual_info_raw, CostSpec, InputDist, MixedChannel};
use crate::error::{Error, Result};
use crate::extended::{ExtendedReal, Method};
use crate::first_order::{component_optima, eps_capacity, eps_capacity_well_ordered, MASS_TOL};
use crate::gaussian::psi;
use crate::optimizer::{capacity_achieving_set, constrained_capacity, DEFAULT_TOL};
use crate::search::{maximize, SearchConfig};
use crate::well_ordered::{check_well_ordered, component_capacities, DEFAULT_GRID, DEFAULT_ORDER_TOL};

/// Default tolerance for deciding `I(P, W_θ) = R`.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;
/// Optimality gap of the capacities used to clip `I(P, W_θ)`.
pub const CAP_CLIP_TOL: f64 = 1e-12;

/// `sup{S : G_w(S) <= ε}` with a flag telling whether the supremum is
/// excluded from the feasible set (a jump of a zero-dispersion atom).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub value: ExtendedReal,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderResult {
    pub s_value: ExtendedReal,
    pub open_boundary: bool,
    /// The first-order rate `R` in nats.
    pub rate: f64,
    pub input: InputDist,
    pub gw_at_solution: f64,
    /// Weight of the atoms tied with `R`.
    pub theta2_mass: f64,
    pub method: Method,
}

/// Split of the atoms at a rate: mass strictly below, and `(weight, V)` of
/// the tied atoms.
#[derive(Debug, Clone)]
struct Split {
    below: f64,
    tied: Vec<(f64, f64)>,
}

impl Split {
    fn tied_mass(&self) -> f64 {
        self.tied.iter().map(|t| t.0).sum()
    }

    fn gw(&self, s: f64) -> f64 {
        self.below + self.tied.iter().map(|&(w, v)| w * psi(v, s)).sum::<f64>()
    }
}

fn split_at(mixed: &MixedChannel, p: &[f64], r: f64, tie_tol: f64) -> Split {
    split_capped(mixed, p, r, tie_tol, &vec![f64::INFINITY; mixed.len()])
}

/// As `split_at`, with `I(P, W_θ)` clipped at the computed capacity `caps[θ]`
/// so that optimizer round-off cannot lift an atom above its own capacity.
fn split_capped(mixed: &MixedChannel, p: &[f64], r: f64, tie_tol: f64, caps: &[f64]) -> Split {
    let mut below = 0.0;
    let mut tied = Vec::new();
    for (a, &cap) in mixed.atoms().iter().zip(caps) {
        let d = mutual_info_raw(p, &a.channel).min(cap) - r;
        if d < -tie_tol {
            below += a.weight;
        } else if d <= tie_tol {
            tied.push((a.weight, dispersion_raw(p, &a.channel)));
        }
    }
    Split { below, tied }
}

fn check_args(mixed: &MixedChannel, p: &InputDist, eps: f64, tie_tol: f64) -> Result<()> {
    if p.len() != mixed.num_inputs() {
        return Err(Error::DimensionMismatch("input length".into()));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps must lie in [0, 1), got {eps}")));
    }
    if !(tie_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tie_tol must be nonnegative, got {tie_tol}")));
    }
    Ok(())
}

/// `G_w(R, S | P) = w{I < R − tie} + Σ_{|I − R| <= tie} w_θ Ψ_{θ,P}(S)`.
pub fn gw(mixed: &MixedChannel, p: &InputDist, r: f64, s: f64, tie_tol: f64) -> Result<f64> {
    if p.len() != mixed.num_inputs() {
        return Err(Error::DimensionMismatch("input length".into()));
    }
    Ok(split_at(mixed, p.probs(), r, tie_tol).gw(s))
}

fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    // f increasing, f(lo) <= target < f(hi)
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest `S` in `(−∞, 0)` or `[0, ∞)` with `h(S) <= t` for the
/// continuous part `h` of the tied atoms.
fn solve_continuous(tied: &[(f64, f64)], t: f64, nonnegative: bool) -> f64 {
    let cont: Vec<(f64, f64)> = tied.iter().copied().filter(|&(_, v)| v > 0.0).collect();
    let h = |s: f64| cont.iter().map(|&(w, v)| w * psi(v, s)).sum::<f64>();
    let scale = cont.iter().map(|&(_, v)| v.sqrt()).fold(0.0, f64::max);
    if nonnegative {
        let mut hi = scale;
        while h(hi) <= t {
            hi *= 2.0;
        }
        bisect(h, t, 0.0, hi)
    } else {
        let mut lo = -scale;
        while h(lo) > t {
            lo *= 2.0;
        }
        bisect(h, t, lo, 0.0)
    }
}

/// Feasibility boundary once the trivial cases are ruled out: `0 <= t <
/// tied mass`.
fn boundary_core(split: &Split, eps: f64) -> Boundary {
    let t = eps - split.below;
    let has_cont = split.tied.iter().any(|&(_, v)| v > 0.0);
    if t.abs() <= MASS_TOL {
        // G_w(S) > below for every finite S once a Gaussian atom is tied
        return if has_cont {
            Boundary { value: ExtendedReal::NegInf, open: false }
        } else {
            Boundary { value: ExtendedReal::Finite(0.0), open: true }
        };
    }
    let step_mass: f64 = split.tied.iter().filter(|&&(_, v)| v <= 0.0).map(|t| t.0).sum();
    let h0: f64 = split.tied.iter().filter(|&&(_, v)| v > 0.0).map(|&(w, _)| 0.5 * w).sum();
    if h0 + step_mass <= t {
        let s = solve_continuous(&split.tied, t - step_mass, true);
        Boundary { value: ExtendedReal::Finite(s), open: false }
    } else if step_mass > 0.0 && h0 <= t {
        Boundary { value: ExtendedReal::Finite(0.0), open: true }
    } else {
        let s = solve_continuous(&split.tied, t, false);
        Boundary { value: ExtendedReal::Finite(s), open: false }
    }
}

fn solve_split(split: &Split, eps: f64) -> Boundary {
    if split.below > eps + MASS_TOL {
        return Boundary { value: ExtendedReal::NegInf, open: false };
    }
    if split.below + split.tied_mass() <= eps + MASS_TOL {
        return Boundary { value: ExtendedReal::PosInf, open: false };
    }
    boundary_core(split, eps)
}

/// `sup{S : G_w(R, S | P) <= ε}`.
pub fn solve_s(mixed: &MixedChannel, p: &InputDist, r: f64, eps: f64, tie_tol: f64) -> Result<Boundary> {
    check_args(mixed, p, eps, tie_tol)?;
    Ok(solve_split(&split_at(mixed, p.probs(), r, tie_tol), eps))
}

/// Solves `Σ_{θ ∈ Θ₂} w_θ Ψ_{θ,P}(S) = ε − w{I < C}` at the ε-capacity `C`,
/// after checking `w{I < C} <= ε <= w{I <= C}` for `P`.
pub fn canonical_solution(mixed: &MixedChannel, p: &InputDist, eps: f64, capacity: f64, tie_tol: f64) -> Result<Boundary> {
    check_args(mixed, p, eps, tie_tol)?;
    let split = split_at(mixed, p.probs(), capacity, tie_tol);
    let top = split.below + split.tied_mass();
    if split.below > eps + MASS_TOL || top < eps - MASS_TOL {
        return Err(Error::NotAdmissible(
            format!("{:?}", p.probs()),
            format!("w{{I < C}} = {}, w{{I <= C}} = {}, eps = {eps}", split.below, top),
        ));
    }
    if split.tied.is_empty() || top <= eps + MASS_TOL {
        // any S solves the equation
        return Ok(Boundary { value: ExtendedReal::PosInf, open: false });
    }
    Ok(boundary_core(&split, eps))
}

fn finish(mixed: &MixedChannel, p: Vec<f64>, r: f64, eps: f64, tie_tol: f64, caps: &[f64], method: Method) -> SecondOrderResult {
    let split = split_capped(mixed, &p, r, tie_tol, caps);
    let b = solve_split(&split, eps);
    SecondOrderResult {
        s_value: b.value,
        open_boundary: b.open,
        rate: r,
        input: InputDist::from_numeric(p),
        gw_at_solution: split.gw(b.value.to_f64()),
        theta2_mass: split.tied_mass(),
        method,
    }
}

/// Direct-part bound `sup_P sup{S : G_w(R, S | P) <= ε}` over feasible
/// inputs. For general mixtures this is only a lower bound on the optimal
/// second-order rate.
pub fn second_order_lb(
    mixed: &MixedChannel,
    cost: &CostSpec,
    r: f64,
    eps: f64,
    tie_tol: f64,
    search: &SearchConfig,
) -> Result<SecondOrderResult> {
    check_args(mixed, &InputDist::uniform(mixed.num_inputs()), eps, tie_tol)?;
    cost.check_dims(mixed.num_inputs())?;
    cost.check_feasible()?;
    let mut seeds = component_optima(mixed, cost)?;
    seeds.push(eps_capacity(mixed, cost, eps, search)?.argmax_input.probs().to_vec());
    let caps = mixed
        .atoms()
        .iter()
        .map(|a| constrained_capacity(&a.channel, cost, CAP_CLIP_TOL).map(|c| c.capacity))
        .collect::<Result<Vec<f64>>>()?;
    let f = |p: &[f64]| solve_split(&split_capped(mixed, p, r, tie_tol, &caps), eps).value.to_f64();
    let best = maximize(&f, mixed.num_inputs(), cost, seeds, search)?;
    Ok(finish(mixed, best.input, r, eps, tie_tol, &caps, Method::LowerBound))
}

/// Optimal second-order rate at `R = C_ε(Γ)` of a Γ-well-ordered mixture:
/// the supremum over representatives of `Π_{θ̄,Γ}` with atoms classified
/// by their capacities. Refuses mixtures that fail the order check.
pub fn second_order_well_ordered(mixed: &MixedChannel, cost: &CostSpec, eps: f64, tie_tol: f64) -> Result<SecondOrderResult> {
    check_args(mixed, &InputDist::uniform(mixed.num_inputs()), eps, tie_tol)?;
    let report = check_well_ordered(mixed, cost, DEFAULT_ORDER_TOL)?;
    if !report.is_well_ordered {
        return Err(Error::NotWellOrdered {
            violations: report.violations.len(),
        });
    }
    let first = eps_capacity_well_ordered(mixed, cost, eps)?;
    let theta = first.achieving_component.expect("set on the well-ordered path");
    let r = first.capacity;
    let caps: Vec<f64> = component_capacities(mixed, cost)?.iter().map(|c| c.capacity).collect();
    let pi = capacity_achieving_set(mixed.component(theta), cost, DEFAULT_TOL, DEFAULT_GRID)?;

    let mut best: Option<(SecondOrderResult, f64)> = None;
    for rep in &pi.representatives {
        let mut split = Split { below: 0.0, tied: Vec::new() };
        for (a, &c) in mixed.atoms().iter().zip(&caps) {
            if c - r < -tie_tol {
                split.below += a.weight;
            } else if c - r <= tie_tol {
                split.tied.push((a.weight, dispersion_raw(rep.probs(), &a.channel)));
            }
        }
        let b = solve_split(&split, eps);
        let v = b.value.to_f64();
        let cand = SecondOrderResult {
            s_value: b.value,
            open_boundary: b.open,
            rate: r,
            input: rep.clone(),
            gw_at_solution: split.gw(v),
            theta2_mass: split.tied_mass(),
            method: Method::ExactFormula,
        };
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((cand, v));
        }
    }
    Ok(best.expect("representative set is never empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Dmc;
    use crate::gaussian::{gaussian_cdf, gaussian_inv};
    use proptest::prelude::*;

    fn synthetic(below: f64, tied: Vec<(f64, f64)>) -> Split {
        Split { below, tied }
    }

    #[test]
    fn gw_examples() {
        assert_eq!(synthetic(0.0, vec![(1.0, 1.0)]).gw(0.0), 0.5);
        assert_eq!(synthetic(1.0, vec![]).gw(-3.0), 1.0);
        assert_eq!(synthetic(0.5, vec![(0.5, 1.0)]).gw(0.0), 0.75);
    }

    #[test]
    fn gw_on_channels() {
        let w = Dmc::bsc(0.11).unwrap();
        let m = MixedChannel::singleton(w.clone());
        let u = InputDist::uniform(2);
        let i = mutual_info_raw(u.probs(), &w);
        assert_eq!(gw(&m, &u, i, f64::INFINITY, 1e-9).unwrap(), 1.0);
        assert_eq!(gw(&m, &u, i + 0.1, 0.0, 1e-9).unwrap(), 1.0);
        assert_eq!(gw(&m, &u, i - 0.1, 0.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn singleton_boundary_is_gaussian_quantile() {
        for (v, eps) in [(0.3, 0.1), (1.0, 0.5), (2.5, 0.9)] {
            let b = solve_split(&synthetic(0.0, vec![(1.0, v)]), eps);
            let want = v.sqrt() * gaussian_inv(eps).unwrap();
            assert!((b.value.finite().unwrap() - want).abs() < 1e-9);
            assert!(!b.open);
        }
    }

    #[test]
    fn zero_dispersion_gives_open_zero() {
        let b = solve_split(&synthetic(0.0, vec![(1.0, 0.0)]), 0.3);
        assert_eq!(b, Boundary { value: ExtendedReal::Finite(0.0), open: true });
    }

    #[test]
    fn infinite_cases() {
        assert_eq!(solve_split(&synthetic(0.6, vec![(0.4, 1.0)]), 0.5).value, ExtendedReal::NegInf);
        assert_eq!(solve_split(&synthetic(0.3, vec![]), 0.5).value, ExtendedReal::PosInf);
        assert_eq!(solve_split(&synthetic(0.5, vec![(0.5, 1.0)]), 0.5).value, ExtendedReal::NegInf);
    }

    #[test]
    fn canonical_two_atom() {
        // 0.5 + 0.5 G(S) = 0.75
        let b = boundary_core(&synthetic(0.5, vec![(0.5, 1.0)]), 0.75);
        assert!(b.value.finite().unwrap().abs() < 1e-12);
    }

    #[test]
    fn canonical_on_channels() {
        let w = Dmc::bsc(0.11).unwrap();
        let m = MixedChannel::singleton(w.clone());
        let u = InputDist::uniform(2);
        let c = mutual_info_raw(u.probs(), &w);
        let v = dispersion_raw(u.probs(), &w);
        let b = canonical_solution(&m, &u, 0.2, c, 1e-9).unwrap();
        assert!((b.value.finite().unwrap() - v.sqrt() * gaussian_inv(0.2).unwrap()).abs() < 1e-9);
        // capacity strictly between the atom values: no tied mass
        let m2 = MixedChannel::from_pairs([(0.5, Dmc::bsc(0.05).unwrap()), (0.5, w)]).unwrap();
        let between = 0.5 * (c + mutual_info_raw(u.probs(), m2.component(0)));
        assert_eq!(canonical_solution(&m2, &u, 0.5, between, 1e-9).unwrap().value, ExtendedReal::PosInf);
        assert!(matches!(
            canonical_solution(&m2, &u, 0.2, between, 1e-9),
            Err(Error::NotAdmissible(..))
        ));
    }

    #[test]
    fn lower_bound_limits() {
        let w = Dmc::bsc(0.11).unwrap();
        let m = MixedChannel::singleton(w.clone());
        let unc = CostSpec::unconstrained(2);
        let cap = constrained_capacity(&w, &unc, DEFAULT_TOL).unwrap().capacity;
        let cfg = SearchConfig::default();
        let lo = second_order_lb(&m, &unc, cap - 1e-3, 0.1, DEFAULT_TIE_TOL, &cfg).unwrap();
        assert_eq!(lo.s_value, ExtendedReal::PosInf);
        let hi = second_order_lb(&m, &unc, cap + 1e-3, 0.1, DEFAULT_TIE_TOL, &cfg).unwrap();
        assert_eq!(hi.s_value, ExtendedReal::NegInf);
        assert_eq!(hi.method, Method::LowerBound);
    }

    #[test]
    fn well_ordered_pair() {
        let a = Dmc::bsc(0.05).unwrap();
        let b = Dmc::bsc(0.2).unwrap();
        let m = MixedChannel::from_pairs([(0.5, a.clone()), (0.5, b)]).unwrap();
        let unc = CostSpec::unconstrained(2);
        // base mass equals eps with a Gaussian atom tied: no finite S
        let r = second_order_well_ordered(&m, &unc, 0.5, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(r.s_value, ExtendedReal::NegInf);
        // 0.5 + 0.5 Ψ(S) = 0.6
        let r = second_order_well_ordered(&m, &unc, 0.6, DEFAULT_TIE_TOL).unwrap();
        let v = dispersion_raw(&[0.5, 0.5], &a);
        let s = r.s_value.finite().unwrap();
        assert!((0.5 + 0.5 * gaussian_cdf(s / v.sqrt()) - 0.6).abs() < 1e-12);
        assert_eq!(r.method, Method::ExactFormula);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gw_monotone_with_limits(
            below in 0.0f64..0.5,
            tied in prop::collection::vec((0.01f64..0.2, 0.0f64..3.0), 0..4),
            a in -50.0f64..50.0, b in -50.0f64..50.0,
        ) {
            let split = synthetic(below, tied);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(split.gw(lo) <= split.gw(hi) + 1e-15);
            let cont: f64 = split.tied.iter().filter(|t| t.1 > 0.0).map(|t| t.0).sum();
            prop_assert!((split.gw(-1e6) - below).abs() < 1e-12);
            prop_assert!((split.gw(1e6) - (below + split.tied_mass())).abs() < 1e-12);
            prop_assert!(cont <= split.tied_mass() + 1e-15);
        }

        #[test]
        fn boundary_matches_grid_scan(
            below in 0.0f64..0.4,
            tied in prop::collection::vec((0.05f64..0.2, 0.05f64..2.0), 1..4),
            frac in 0.05f64..0.95,
        ) {
            let split = synthetic(below, tied);
            let eps = below + frac * split.tied_mass();
            let s = solve_split(&split, eps).value.finite().unwrap();
            // grid scan of the feasible set at step 1e-4
            let mut scan = f64::NEG_INFINITY;
            let mut x = -10.0;
            while x <= 10.0 {
                if split.gw(x) <= eps {
                    scan = x;
                }
                x += 1e-4;
            }
            prop_assert!((s - scan).abs() < 1e-3, "{} vs {}", s, scan);
        }
    }
}
