//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mixcap::fbl::{per_letter_spectrum, LetterSource};
use mixcap::types::TypeClass;
use mixcap::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------- independent oracles ----------

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

fn out_dist(p: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let ny = rows[0].len();
    (0..ny).map(|y| p.iter().zip(rows).map(|(px, r)| px * r[y]).sum()).collect()
}

fn kl(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| xlogy(x, y)).sum()
}

fn mi(p: &[f64], rows: &[Vec<f64>]) -> f64 {
    let q = out_dist(p, rows);
    p.iter().zip(rows).map(|(px, r)| px * kl(r, &q)).sum()
}

fn dispersion(p: &[f64], rows: &[Vec<f64>]) -> f64 {
    let q = out_dist(p, rows);
    let i = mi(p, rows);
    let mut v = 0.0;
    for (px, r) in p.iter().zip(rows) {
        for (y, &wy) in r.iter().enumerate() {
            if wy > 0.0 {
                let d = (wy / q[y]).ln() - i;
                v += px * wy * d * d;
            }
        }
    }
    v
}

/// Capacity-achieving `P(x=0)` of a binary-input channel with distinct rows:
/// the root of `D(W_0‖PW) − D(W_1‖PW)`, decreasing in `P(x=0)`.
fn binary_optimum(rows: &[Vec<f64>]) -> f64 {
    let f = |a: f64| {
        let q = out_dist(&[a, 1.0 - a], rows);
        kl(&rows[0], &q) - kl(&rows[1], &q)
    };
    let (mut lo, mut hi) = (1e-15, 1.0 - 1e-15);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn random_binary(rng: &mut ChaCha8Rng, min_gap: f64) -> Vec<Vec<f64>> {
    loop {
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0);
        if (a - b).abs() >= min_gap {
            return vec![vec![a, 1.0 - a], vec![b, 1.0 - b]];
        }
    }
}

fn random_mixture(rng: &mut ChaCha8Rng, max_atoms: usize) -> MixedChannel {
    let k = rng.random_range(1..=max_atoms);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixedChannel::from_pairs(
        raw.iter()
            .map(|r| (r / total, Dmc::new(random_binary(rng, 0.0)).unwrap()))
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

fn rows_of(w: &Dmc) -> Vec<Vec<f64>> {
    w.rows().to_vec()
}

// ---------- criteria ----------

fn singleton_second_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::standard();
    let unc = CostSpec::unconstrained(2);
    let cfg = SearchConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rows = random_binary(&mut rng, 0.1);
        let w = Dmc::new(rows.clone()).unwrap();
        let m = MixedChannel::singleton(w.clone());
        let a = binary_optimum(&rows);
        let v = dispersion(&[a, 1.0 - a], &rows);
        let cap = constrained_capacity(&w, &unc, 1e-12).unwrap().capacity;
        ensure((cap - mi(&[a, 1.0 - a], &rows)).abs() < 1e-12, || format!("capacity {cap} off"))?;
        for eps in [0.01, 0.1, 0.5, 0.9] {
            let want = v.sqrt() * normal.inverse_cdf(eps);
            let exact = second_order_well_ordered(&m, &unc, eps, 1e-9).unwrap();
            let lb = second_order_lb(&m, &unc, cap, eps, 1e-14, &cfg).unwrap();
            for (name, got) in [("exact-formula", exact.s_value), ("lower-bound", lb.s_value)] {
                let got = got.finite().ok_or_else(|| format!("{name}: S = {got:?} (tied mass {}, input {:?}) for {rows:?} at eps {eps}", lb.theta2_mass, lb.input.probs()))?;
                worst = worst.max((got - want).abs());
                ensure((got - want).abs() <= 1e-6, || {
                    format!("{name}: S = {got}, oracle {want} for {rows:?} at eps {eps}")
                })?;
            }
        }
    }
    Ok(format!("max |S - sqrt(V) G^-1(eps)| = {worst:.2e}"))
}

fn quantile_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = random_mixture(&mut rng, 5);
        let a: f64 = rng.random_range(0.0..1.0);
        let p = InputDist::new(vec![a, 1.0 - a]).unwrap();
        let eps: f64 = rng.random_range(0.0..1.0);
        let vals: Vec<(f64, f64)> = m.atoms().iter().map(|t| (mi(p.probs(), &rows_of(&t.channel)), t.weight)).collect();
        let got = rate_quantile(&m, &p, eps).unwrap();
        let mut scan = 0.0;
        let mut k = 0usize;
        loop {
            let r = k as f64 * 1e-5;
            if r > 2f64.ln() + 1e-5 {
                break;
            }
            let below: f64 = vals.iter().filter(|(i, _)| *i < r).map(|(_, w)| w).sum();
            if below <= eps {
                scan = r;
            }
            k += 1;
        }
        worst = worst.max((got - scan).abs());
        ensure((got - scan).abs() <= 1e-5, || format!("quantile {got} vs scan {scan} at eps {eps}"))?;
    }
    Ok(format!("max |quantile - scan| = {worst:.2e}"))
}

fn bsc_family() -> MixedChannel {
    MixedChannel::from_pairs([
        (0.3, Dmc::bsc(0.05).unwrap()),
        (0.3, Dmc::bsc(0.11).unwrap()),
        (0.4, Dmc::bsc(0.2).unwrap()),
    ])
    .unwrap()
}

fn well_ordered_reduction() -> Outcome {
    let m = bsc_family();
    let unc = CostSpec::unconstrained(2);
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.25, 0.5, 0.75] {
        let full = eps_capacity(&m, &unc, eps, &SearchConfig::default()).unwrap().capacity;
        let reduced = eps_capacity_well_ordered(&m, &unc, eps).unwrap().capacity;
        worst = worst.max((full - reduced).abs());
        ensure((full - reduced).abs() <= 1e-4, || format!("eps {eps}: full {full} vs well-ordered {reduced}"))?;
    }
    Ok(format!("max gap = {worst:.2e}"))
}

fn eps_zero_infimum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let unc = CostSpec::unconstrained(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = random_mixture(&mut rng, 4);
        let r = eps_capacity(&m, &unc, 0.0, &SearchConfig::default()).unwrap();
        let at = r.argmax_input.probs();
        let min_i = m.atoms().iter().map(|t| mi(at, &rows_of(&t.channel))).fold(f64::INFINITY, f64::min);
        ensure((r.capacity - min_i).abs() <= 1e-9, || format!("C0 {} vs min I {}", r.capacity, min_i))?;
        // brute-force max-min over the binary simplex
        let mut best = 0.0f64;
        for k in 0..=10_000 {
            let a = k as f64 * 1e-4;
            let v = m
                .atoms()
                .iter()
                .map(|t| mi(&[a, 1.0 - a], &rows_of(&t.channel)))
                .fold(f64::INFINITY, f64::min);
            best = best.max(v);
        }
        worst = worst.max((r.capacity - best).abs());
        ensure(r.capacity >= best - 1e-4 && r.capacity <= best + 1e-4, || {
            format!("C0 {} vs brute-force max-min {}", r.capacity, best)
        })?;
    }
    Ok(format!("max |C0 - brute force| = {worst:.2e}"))
}

/// `Σ_θ w_θ Pr_θ{log W_θ^n/Q_θ^n <= ln M − nη} − e^{−nη}` over all `y`
/// for every `x` sequence weighted by `px`.
fn brute_force_converse(
    m: &MixedChannel,
    q: &[Vec<f64>],
    xs: &[(Vec<usize>, f64)],
    n: usize,
    log_m: f64,
    eta: f64,
) -> Option<f64> {
    let t = log_m - n as f64 * eta;
    let mut total = 0.0;
    for (atom, qt) in m.atoms().iter().zip(q) {
        let rows = rows_of(&atom.channel);
        let mut tail = 0.0;
        for (x, px) in xs {
            for code in 0..(1usize << n) {
                let mut ln_w = 0.0;
                let mut ln_q = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    let y = (code >> i) & 1;
                    ln_w += rows[xi][y].ln();
                    ln_q += qt[y].ln();
                }
                if ln_w == f64::NEG_INFINITY {
                    continue;
                }
                let d = ln_w - ln_q;
                if (d - t).abs() < 1e-7 {
                    return None;
                }
                if d <= t {
                    tail += px * ln_w.exp();
                }
            }
        }
        total += atom.weight * tail;
    }
    Some((total - (-(n as f64) * eta).exp()).clamp(0.0, 1.0))
}

fn decomposition_lemmas() -> Outcome {
    let m = MixedChannel::from_pairs([(0.5, Dmc::bsc(0.05).unwrap()), (0.5, Dmc::bsc(0.2).unwrap())]).unwrap();
    let mut checked = 0;
    for n in [8usize, 12, 16] {
        let t = TypeClass::new(vec![n / 2, n - n / 2]).unwrap();
        let q: Vec<Vec<f64>> = m.atoms().iter().map(|a| output_distribution(&t.to_dist(), &a.channel).unwrap()).collect();
        let report = decomposition_check(&m, &t, &q, 1.0, 50).unwrap();
        ensure(report.z_grid.len() == 50, || "z grid size".into())?;
        ensure(report.passed(), || format!("n = {n}: {} violation(s)", report.violations.len()))?;
        checked += report.checked;
    }

    // converse against full enumeration of Y^n at n = 8
    let n = 8;
    let q = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    let families: Vec<QFamily> = q.iter().cloned().map(QFamily::Product).collect();
    let t = TypeClass::new(vec![3, 5]).unwrap();
    let comp_x = vec![(t.sequence(), 1.0)];
    let iid = InputDist::new(vec![0.3, 0.7]).unwrap();
    let iid_x: Vec<(Vec<usize>, f64)> = (0..(1usize << n))
        .map(|code| {
            let x: Vec<usize> = (0..n).map(|i| (code >> i) & 1).collect();
            let px = x.iter().map(|&v| iid.probs()[v]).product();
            (x, px)
        })
        .collect();
    let eta = 0.05;
    let slack = SlackParams::new(eta, 1.0, 0.0).unwrap();
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for (input, xs) in [(InputLaw::Composition(t.clone()), &comp_x), (InputLaw::Iid(iid.clone()), &iid_x)] {
        for k in 0..40 {
            let log_m = 0.5 + 0.13 * k as f64;
            let Some(oracle) = brute_force_converse(&m, &q, xs, n, log_m, eta) else {
                continue;
            };
            let code = CodeParams::new(n, log_m).unwrap();
            let got = mixed_converse_bound(&m, &input, &code, &families, &slack).unwrap().value;
            worst = worst.max((got - oracle).abs());
            ensure((got - oracle).abs() <= 1e-12, || format!("ln M {log_m}: {got} vs enumeration {oracle}"))?;
            compared += 1;
        }
    }
    ensure(compared >= 40, || format!("only {compared} thresholds compared"))?;
    Ok(format!("{checked} inequality points, {compared} converse values (max diff {worst:.1e})"))
}

fn expurgation_mass() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut lines = 0;
    for _ in 0..10 {
        let w0: f64 = rng.random_range(0.05..0.95);
        let m = MixedChannel::from_pairs([
            (w0, Dmc::new(random_binary(&mut rng, 0.0)).unwrap()),
            (1.0 - w0, Dmc::new(random_binary(&mut rng, 0.0)).unwrap()),
        ])
        .unwrap();
        let q: Vec<Vec<f64>> = m.atoms().iter().map(|a| output_distribution(&InputDist::uniform(2), &a.channel).unwrap()).collect();
        for n in [4usize, 8, 16] {
            let r = expurgated_space(&m, &q, n).unwrap();
            let bound = 1.0 - 2.0 * ((n + 1) as f64).powi(4) * (-(n as f64).powf(0.25)).exp();
            ensure((r.bound - bound).abs() < 1e-12, || format!("reported bound {} vs {}", r.bound, bound))?;
            ensure(r.mass >= r.bound, || format!("n = {n}: mass {} below bound {}", r.mass, r.bound))?;
            lines += 1;
        }
    }
    Ok(format!("{lines} (mixture, n) pairs"))
}

fn normal_approximation() -> Outcome {
    let n = 2000;
    let w = Dmc::bsc(0.11).unwrap();
    let m = MixedChannel::singleton(w.clone());
    let rows = rows_of(&w);
    let c = mi(&[0.5, 0.5], &rows);
    let v = dispersion(&[0.5, 0.5], &rows);
    let eps = 0.1;
    let approx = normal_approx(n, c, v.sqrt() * Normal::standard().inverse_cdf(eps));
    let input = InputLaw::Iid(InputDist::uniform(2));
    let slack = SlackParams::new(1000f64.ln() / n as f64, 1.0, 0.0).unwrap();
    let q = [QFamily::Product(vec![0.5, 0.5])];
    let ach = crossing_rate(BoundKind::Feinstein, &m, &input, n, &[], &slack, eps).unwrap().ok_or("no feinstein crossing")?;
    let conv = crossing_rate(BoundKind::MixedConverse, &m, &input, n, &q, &slack, eps).unwrap().ok_or("no converse crossing")?;
    let (lo, hi) = (n as f64 * ach, n as f64 * conv);
    let root = (n as f64).sqrt();
    ensure(lo <= approx && approx <= hi, || format!("{lo} <= {approx} <= {hi} fails"))?;
    let (g1, g2) = ((approx - lo) / root, (hi - approx) / root);
    ensure(g1 < 0.5 && g2 < 0.5, || format!("gaps/sqrt(n) = {g1}, {g2}"))?;
    Ok(format!("ln M in [{lo:.2}, {hi:.2}] around {approx:.2}; gaps/sqrt(n) = {g1:.3}, {g2:.3}"))
}

fn mc_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut repro = None;
    for case in 0..20 {
        let w = Dmc::new(random_binary(&mut rng, 0.05)).unwrap();
        let n = rng.random_range(10..=200usize);
        let c0 = rng.random_range(1..n);
        let t = TypeClass::new(vec![c0, n - c0]).unwrap();
        let q = output_distribution(&t.to_dist(), &w).unwrap();
        let parts: Vec<(Vec<(f64, f64)>, usize)> = (0..2)
            .map(|x| (per_letter_spectrum(LetterSource::Letter(x), &w, &q).unwrap(), t.counts[x]))
            .collect();
        let exact = SpectrumCdf::from_parts(&parts).unwrap();
        let i = mutual_information(&t.to_dist(), &w).unwrap();
        let threshold = i + rng.random_range(-0.5..0.5) / (n as f64).sqrt();
        let m = MixedChannel::singleton(w);
        let input = InputLaw::Composition(t);
        let seed = rng.random::<u64>();
        let est = mc_tail(&m, &input, &[(1.0, q.clone())], n, threshold, 100_000, seed).unwrap();
        let want = exact.tail(threshold);
        // standard error of the estimator under the exact tail probability
        let se = (want * (1.0 - want) / 100_000.0).sqrt();
        ensure((est.value - want).abs() <= 4.0 * se, || {
            format!("case {case}: mc {} vs exact {want}, se {se}", est.value)
        })?;
        if se > 0.0 {
            worst = worst.max((est.value - want).abs() / se);
        }
        if case < 3 {
            let run = |threads: usize| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap()
                    .install(|| mc_tail(&m, &input, &[(1.0, q.clone())], n, threshold, 100_000, seed).unwrap())
            };
            let (a, b) = (run(1), run(3));
            ensure(a == b && a == est, || format!("case {case}: results differ across thread counts"))?;
            repro = Some(a.value.to_bits());
        }
    }
    ensure(repro.is_some(), || "no reproducibility check ran".into())?;
    Ok(format!("max |mc - exact| / stderr = {worst:.2}"))
}

fn quantized_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let k = rng.random_range(2..=5usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p0 = InputDist::new(raw.iter().map(|v| v / total).collect()).unwrap();
        let costs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let gamma = p0.probs().iter().zip(&costs).map(|(p, c)| p * c).sum::<f64>();
        let cost = CostSpec::new(costs.clone(), Budget::Limit(gamma)).unwrap();
        let n = rng.random_range(1..=500usize);
        let t = quantized_type(&p0, n, &cost).unwrap();
        ensure(t.n == n && t.counts.iter().sum::<usize>() == n, || "type length".into())?;
        let pn: Vec<f64> = t.counts.iter().map(|&c| c as f64 / n as f64).collect();
        let e: f64 = pn.iter().zip(&costs).map(|(p, c)| p * c).sum();
        ensure(e <= gamma + 1e-12, || format!("cost {e} exceeds {gamma}"))?;
        let dev = pn.iter().zip(p0.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(dev <= k as f64 / n as f64, || format!("deviation {dev} > {k}/{n}"))?;
    }
    Ok("200 instances".into())
}

fn z_capacity(q: f64) -> f64 {
    (1.0 + (1.0 - q) * q.powf(q / (1.0 - q))).ln()
}

fn discrimination() -> Outcome {
    let unc = CostSpec::unconstrained(2);
    let good = check_well_ordered(&bsc_family(), &unc, 1e-7).unwrap();
    ensure(good.is_well_ordered, || format!("BSC family flagged: {:?}", good.violations))?;

    let target = 2f64.ln() - (-(0.11f64 * 0.11f64.ln()) - 0.89 * 0.89f64.ln());
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if z_capacity(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pair = MixedChannel::from_pairs([(0.5, Dmc::bsc(0.11).unwrap()), (0.5, Dmc::z_channel(0.5 * (lo + hi)).unwrap())]).unwrap();
    let bad = check_well_ordered(&pair, &unc, 1e-7).unwrap();
    ensure(!bad.is_well_ordered && !bad.violations.is_empty(), || "equal-capacity pair not flagged".into())?;
    Ok(format!("family passes; BSC/Z pair has {} violation(s)", bad.violations.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("singleton second-order rate", singleton_second_order, 10),
        ("eps-quantile vs rate scan", quantile_oracle, 30),
        ("well-ordered reduction", well_ordered_reduction, 60),
        ("eps = 0 essential infimum", eps_zero_infimum, 120),
        ("decomposition inequalities and converse enumeration", decomposition_lemmas, 120),
        ("expurgated mass bound", expurgation_mass, 120),
        ("normal approximation bracket", normal_approximation, 120),
        ("monte carlo vs exact", mc_agreement, 120),
        ("quantized type contract", quantized_contract, 60),
        ("well-orderedness discrimination", discrimination, 60),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > Duration::from_secs(*budget) => Err(format!("took {elapsed:.1?}, budget {budget}s")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({elapsed:.1?})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} ({elapsed:.1?})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
