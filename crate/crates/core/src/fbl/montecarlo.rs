//! Seeded Monte-Carlo estimates of information-spectrum tails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BoundEstimate, BoundKind, InputLaw};
use crate::channel::MixedChannel;
use crate::error::{Error, Result};
use crate::extended::Method;
use crate::types::lse;

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn ln_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Estimates `Pr{(1/n) log(W^n(Y|X) / Q^n(Y)) <= threshold}` where `W^n` is
/// the mixture law and `Q^n = Σ_j v_j q_j^n` is given by `reference`.
///
/// Trial `t` draws from its own ChaCha8 stream `t` under `seed`, so the
/// estimate does not depend on the thread count.
pub fn mc_tail(
    mixed: &MixedChannel,
    input: &InputLaw,
    reference: &[(f64, Vec<f64>)],
    n: usize,
    threshold: f64,
    trials: u64,
    seed: u64,
) -> Result<BoundEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    input.check(mixed.num_inputs(), n)?;
    let ny = mixed.num_outputs();
    if reference.is_empty() || reference.iter().any(|(v, q)| !(*v > 0.0) || q.len() != ny) {
        return Err(Error::DimensionMismatch("reference needs positive weights and one entry per output".into()));
    }
    let estimate = |value: f64, stderr: f64| BoundEstimate {
        value,
        kind: BoundKind::ExactTail,
        stderr,
        trials,
        seed,
        method: Method::Mc,
        surrogate: false,
    };
    if threshold == f64::INFINITY {
        return Ok(estimate(1.0, 0.0));
    }
    if threshold == f64::NEG_INFINITY {
        return Ok(estimate(0.0, 0.0));
    }

    let p = input.dist();
    for a in mixed.atoms() {
        for (x, &px) in p.probs().iter().enumerate() {
            for (y, &wy) in a.channel.row(x).iter().enumerate() {
                if px > 0.0 && wy > 0.0 && reference.iter().all(|(_, q)| q[y] <= 0.0) {
                    return Err(Error::Domination { input: x, output: y });
                }
            }
        }
    }

    let k = mixed.len();
    let nx = mixed.num_inputs();
    let ln_w: Vec<f64> = mixed.weights().iter().map(|w| w.ln()).collect();
    let ln_v: Vec<f64> = reference.iter().map(|(v, _)| v.ln()).collect();
    let ln_ch: Vec<Vec<f64>> = mixed
        .atoms()
        .iter()
        .map(|a| (0..nx).flat_map(|x| a.channel.row(x).iter().map(|&v| ln_or_neg_inf(v))).collect())
        .collect();
    let ln_q: Vec<Vec<f64>> = reference.iter().map(|(_, q)| q.iter().map(|&v| ln_or_neg_inf(v)).collect()).collect();
    let theta_cum = cumulative(&mixed.weights());
    let row_cum: Vec<Vec<Vec<f64>>> = mixed
        .atoms()
        .iter()
        .map(|a| (0..nx).map(|x| cumulative(a.channel.row(x))).collect())
        .collect();
    let letters = match input {
        InputLaw::Iid(_) => None,
        InputLaw::Composition(t) => Some(t.sequence()),
    };
    let p_cum = cumulative(p.probs());
    let cut = n as f64 * threshold + super::tie(n as f64 * threshold);

    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let theta = draw(&theta_cum, rng.random());
            let mut acc_w = ln_w.clone();
            let mut acc_q = ln_v.clone();
            for i in 0..n {
                let x = match &letters {
                    Some(seq) => seq[i],
                    None => draw(&p_cum, rng.random()),
                };
                let y = draw(&row_cum[theta][x], rng.random());
                for j in 0..k {
                    acc_w[j] += ln_ch[j][x * ny + y];
                }
                for (r, acc) in acc_q.iter_mut().enumerate() {
                    *acc += ln_q[r][y];
                }
            }
            let density = lse(acc_w.into_iter()) - lse(acc_q.into_iter());
            u64::from(density <= cut)
        })
        .sum();
    let p_hat = hits as f64 / trials as f64;
    Ok(estimate(p_hat, (p_hat * (1.0 - p_hat) / trials as f64).sqrt()))
}
