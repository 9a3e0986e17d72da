//! Finite-blocklength bounds on the error of `(n, M)` codes, the normal
//! approximation, and the machinery behind them: exact spectra by
//! convolution or type enumeration, and seeded Monte-Carlo tails.

pub mod enumerate;
pub mod montecarlo;
pub mod spectrum;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{output_dist_raw, Dmc, InputDist, MixedChannel, SlackParams};
use crate::error::{Error, Result};
use crate::extended::Method;
use crate::types::{enumerate_types, TypeClass};
use enumerate::{ln_product_mixture, TypeTable};

pub use montecarlo::mc_tail;
pub(crate) use spectrum::tie;
pub use spectrum::{convolve_n, per_letter_spectrum, LetterSource, SpectrumCdf};

/// Blocklength and code size. `log_m` is `ln M` in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub log_m: f64,
}

impl CodeParams {
    pub fn new(n: usize, log_m: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
        }
        if !(log_m >= 0.0) || !log_m.is_finite() {
            return Err(Error::InvalidParameter(format!("log M must be finite and >= 0, got {log_m}")));
        }
        Ok(Self { n, log_m })
    }

    pub fn from_rate(n: usize, rate: f64) -> Result<Self> {
        Self::new(n, rate * n as f64)
    }

    /// `(1/n) ln M`.
    pub fn rate(&self) -> f64 {
        self.log_m / self.n as f64
    }
}

/// How codeword letters are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputLaw {
    /// Independent letters from `P`.
    Iid(InputDist),
    /// Uniform over the sequences of one type. Tails are conditional on any
    /// fixed sequence of the type.
    Composition(TypeClass),
}

impl InputLaw {
    pub fn dist(&self) -> InputDist {
        match self {
            InputLaw::Iid(p) => p.clone(),
            InputLaw::Composition(t) => t.to_dist(),
        }
    }

    pub(crate) fn check(&self, nx: usize, n: usize) -> Result<()> {
        let len = match self {
            InputLaw::Iid(p) => p.len(),
            InputLaw::Composition(t) => {
                if t.n != n {
                    return Err(Error::DimensionMismatch(format!("composition has length {}, blocklength is {n}", t.n)));
                }
                t.counts.len()
            }
        };
        if len != nx {
            return Err(Error::DimensionMismatch(format!("input law has {len} letters, channel has {nx}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output reference `Q^n` of the converse bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QFamily {
    /// `q^n` for one single-letter `q`.
    Product(Vec<f64>),
    /// `(1/N) Σ_P (PW)^n` over the `N` input types of length `n`.
    TypeMixture,
    /// The type mixture plus `q^n`, each of the `N + 1` terms weighted
    /// `1/(N+1)`.
    TypeMixtureWithCap(Vec<f64>),
}

impl QFamily {
    /// The family as a mixture of products `Σ_j v_j q_j^n` for the given
    /// channel. Type-induced terms of a mixed channel are `w`-averaged over
    /// components.
    pub fn resolve(&self, mixed: &MixedChannel, n: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let ny = mixed.num_outputs();
        let types = |extra: usize| -> Result<(Vec<(f64, Vec<f64>)>, f64)> {
            let all = enumerate_types(mixed.num_inputs(), n)?;
            let share = 1.0 / (all.len() + extra) as f64;
            let mut out = Vec::with_capacity(all.len() * mixed.len());
            for t in &all {
                let p = t.to_dist();
                for a in mixed.atoms() {
                    out.push((share * a.weight, output_dist_raw(p.probs(), &a.channel)));
                }
            }
            Ok((out, share))
        };
        let check = |q: &Vec<f64>| -> Result<()> {
            if q.len() != ny {
                return Err(Error::DimensionMismatch(format!("reference has {} entries, channel has {ny} outputs", q.len())));
            }
            InputDist::new(q.clone()).map(|_| ())
        };
        match self {
            QFamily::Product(q) => {
                check(q)?;
                Ok(vec![(1.0, q.clone())])
            }
            QFamily::TypeMixture => Ok(types(0)?.0),
            QFamily::TypeMixtureWithCap(q) => {
                check(q)?;
                let (mut out, share) = types(1)?;
                out.push((share, q.clone()));
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Feinstein,
    HayashiNagaoka,
    MixedConverse,
    ExactTail,
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundKind::Feinstein => "feinstein",
            BoundKind::HayashiNagaoka => "hayashi_nagaoka",
            BoundKind::MixedConverse => "mixed_converse",
            BoundKind::ExactTail => "exact_tail",
        })
    }
}

/// A bound value. Exact estimates have `stderr = 0` and `trials = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub value: f64,
    pub kind: BoundKind,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
    pub method: Method,
    /// Set when `P_{Y^n}` was replaced by a product upper bound, which can
    /// only raise the reported value.
    pub surrogate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
}

/// Exact law of an n-letter density with a threshold shift: the true tail at
/// `T` is at most `cdf.tail_sum(T + shift)`, with equality when `shift = 0`.
struct DensityLaw {
    cdf: SpectrumCdf,
    shift: f64,
    surrogate: bool,
}

impl DensityLaw {
    fn exact(cdf: SpectrumCdf) -> Self {
        Self { cdf, shift: 0.0, surrogate: false }
    }

    fn tail_sum(&self, t: f64) -> f64 {
        self.cdf.tail_sum(t + self.shift)
    }
}

fn product_law(w: &Dmc, input: &InputLaw, q: &[f64], n: usize) -> Result<SpectrumCdf> {
    match input {
        InputLaw::Iid(p) => SpectrumCdf::iid(per_letter_spectrum(LetterSource::Input(p), w, q)?, n),
        InputLaw::Composition(t) => {
            let parts = t
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(x, &c)| Ok((per_letter_spectrum(LetterSource::Letter(x), w, q)?, c)))
                .collect::<Result<Vec<_>>>()?;
            SpectrumCdf::from_parts(&parts)
        }
    }
}

fn table_for(input: &InputLaw, ny: usize, n: usize) -> Result<TypeTable> {
    match input {
        InputLaw::Iid(p) => TypeTable::for_iid(p, ny, n),
        InputLaw::Composition(t) => TypeTable::for_composition(t, ny),
    }
}

/// Law of `log W^n / Q^n` by enumerating joint types, `W^n` the mixture law
/// and `ln Q^n` given per output type.
fn enumerated_law(table: &TypeTable, mixed: &MixedChannel, ln_ref: &[f64]) -> Result<SpectrumCdf> {
    let probs = table.mixture_probabilities(mixed);
    let mut pairs = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let r = ln_ref[table.column_index(i)];
        if r == f64::NEG_INFINITY {
            let k = table.cell(i);
            let s = table.column_sums(i);
            let y = (0..table.ny).find(|&y| s[y] > 0 && (0..table.nx).any(|x| k[x * table.ny + y] > 0)).unwrap_or(0);
            let x = (0..table.nx).find(|&x| k[x * table.ny + y] > 0).unwrap_or(0);
            return Err(Error::Domination { input: x, output: y });
        }
        pairs.push((table.ln_mixture_likelihood(mixed, i) - r, p));
    }
    Ok(SpectrumCdf::from_sums(pairs, table.n))
}

fn product_mixture_law(mixed: &MixedChannel, input: &InputLaw, n: usize, mix: &[(f64, Vec<f64>)]) -> Result<SpectrumCdf> {
    let table = table_for(input, mixed.num_outputs(), n)?;
    let ln_ref: Vec<f64> = table.col_sums.iter().map(|s| ln_product_mixture(mix, s)).collect();
    enumerated_law(&table, mixed, &ln_ref)
}

/// Output law `Σ_θ w_θ (PW_θ)`, one product term per component.
fn iid_output_mixture(mixed: &MixedChannel, p: &InputDist) -> Vec<(f64, Vec<f64>)> {
    mixed
        .atoms()
        .iter()
        .map(|a| (a.weight, output_dist_raw(p.probs(), &a.channel)))
        .collect()
}

/// `log(n+1)^{|X|}`: `P_{Y^n} <= (n+1)^{|X|} Σ_θ w_θ (PW_θ)^n` for a
/// type-class input.
fn type_class_slack(nx: usize, n: usize) -> f64 {
    nx as f64 * ((n + 1) as f64).ln()
}

/// Law of `log W^n(Y|X) / P_{Y^n}(Y)` for the mixture and the input law.
fn output_law(mixed: &MixedChannel, input: &InputLaw, n: usize) -> Result<DensityLaw> {
    input.check(mixed.num_inputs(), n)?;
    match input {
        InputLaw::Iid(p) if mixed.is_singleton() => {
            let w = mixed.component(0);
            Ok(DensityLaw::exact(product_law(w, input, &output_dist_raw(p.probs(), w), n)?))
        }
        InputLaw::Iid(p) => Ok(DensityLaw::exact(product_mixture_law(mixed, input, n, &iid_output_mixture(mixed, p))?)),
        InputLaw::Composition(t) => match TypeTable::for_composition(t, mixed.num_outputs()) {
            Ok(table) => {
                let ln_ref = table.type_class_output(mixed)?;
                Ok(DensityLaw::exact(enumerated_law(&table, mixed, &ln_ref)?))
            }
            Err(Error::CapExceeded { .. }) if mixed.is_singleton() => {
                let w = mixed.component(0);
                let q = output_dist_raw(t.to_dist().probs(), w);
                Ok(DensityLaw {
                    cdf: product_law(w, input, &q, n)?,
                    shift: type_class_slack(mixed.num_inputs(), n),
                    surrogate: true,
                })
            }
            Err(e) => Err(e),
        },
    }
}

/// Law of `log W^n / Q^n` for a reference family.
fn reference_law(mixed: &MixedChannel, input: &InputLaw, n: usize, q: &QFamily) -> Result<DensityLaw> {
    input.check(mixed.num_inputs(), n)?;
    if let (true, QFamily::Product(qv)) = (mixed.is_singleton(), q) {
        if qv.len() != mixed.num_outputs() {
            return Err(Error::DimensionMismatch("reference output length".into()));
        }
        return Ok(DensityLaw::exact(product_law(mixed.component(0), input, qv, n)?));
    }
    let mix = q.resolve(mixed, n)?;
    Ok(DensityLaw::exact(product_mixture_law(mixed, input, n, &mix)?))
}

/// A bound as a function of `ln M` with its spectra computed once.
struct Evaluator {
    kind: BoundKind,
    laws: Vec<(f64, DensityLaw)>,
    n: usize,
    eta: f64,
}

impl Evaluator {
    fn value(&self, log_m: f64) -> f64 {
        let n_eta = self.n as f64 * self.eta;
        let slack = (-n_eta).exp();
        match self.kind {
            BoundKind::Feinstein => (self.laws[0].1.tail_sum(log_m + n_eta) + slack).min(1.0),
            BoundKind::ExactTail => self.laws[0].1.tail_sum(log_m),
            BoundKind::HayashiNagaoka | BoundKind::MixedConverse => {
                let tail: f64 = self.laws.iter().map(|(w, l)| w * l.tail_sum(log_m - n_eta)).sum();
                (tail - slack).clamp(0.0, 1.0)
            }
        }
    }

    fn surrogate(&self) -> bool {
        self.laws.iter().any(|(_, l)| l.surrogate)
    }

    fn estimate(&self, log_m: f64) -> BoundEstimate {
        BoundEstimate {
            value: self.value(log_m),
            kind: self.kind,
            stderr: 0.0,
            trials: 0,
            seed: 0,
            method: Method::Exact,
            surrogate: self.surrogate(),
        }
    }
}

fn check_slack(slack: &SlackParams) -> Result<()> {
    if !(slack.eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {}", slack.eta)));
    }
    Ok(())
}

fn check_family_len(mixed: &MixedChannel, q: &[QFamily]) -> Result<()> {
    if q.len() != mixed.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} reference families for {} components",
            q.len(),
            mixed.len()
        )));
    }
    Ok(())
}

fn evaluator(kind: BoundKind, mixed: &MixedChannel, input: &InputLaw, n: usize, q: &[QFamily], eta: f64) -> Result<Evaluator> {
    let laws = match kind {
        BoundKind::Feinstein | BoundKind::ExactTail => vec![(1.0, output_law(mixed, input, n)?)],
        BoundKind::HayashiNagaoka => {
            let fam = q.first().ok_or_else(|| Error::InvalidParameter("missing reference family".into()))?;
            vec![(1.0, reference_law(mixed, input, n, fam)?)]
        }
        BoundKind::MixedConverse => {
            check_family_len(mixed, q)?;
            mixed
                .atoms()
                .par_iter()
                .zip(q)
                .map(|(a, fam)| Ok((a.weight, reference_law(&MixedChannel::singleton(a.channel.clone()), input, n, fam)?)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Evaluator { kind, laws, n, eta })
}

/// Monte-Carlo fallback for tails against `P_{Y^n}` past the enumeration cap.
fn mc_output_tail(mixed: &MixedChannel, input: &InputLaw, n: usize, log_t: f64, mc: McConfig) -> Result<(BoundEstimate, bool)> {
    let p = input.dist();
    let reference = iid_output_mixture(mixed, &p);
    let (shift, surrogate) = match input {
        InputLaw::Iid(_) => (0.0, false),
        InputLaw::Composition(_) => (type_class_slack(mixed.num_inputs(), n), true),
    };
    let est = mc_tail(mixed, input, &reference, n, (log_t + shift) / n as f64, mc.trials, mc.seed)?;
    Ok((est, surrogate))
}

/// Achievability: `Pr{(1/n) log W^n/P_{Y^n} <= (1/n) ln M + η} + e^{−nη}`,
/// clipped to 1. Exact when the spectrum fits the caps; otherwise a
/// Monte-Carlo estimate if `mc` is given.
pub fn feinstein_bound(
    mixed: &MixedChannel,
    input: &InputLaw,
    code: &CodeParams,
    slack: &SlackParams,
    mc: Option<McConfig>,
) -> Result<BoundEstimate> {
    check_slack(slack)?;
    match evaluator(BoundKind::Feinstein, mixed, input, code.n, &[], slack.eta) {
        Ok(ev) => Ok(ev.estimate(code.log_m)),
        Err(Error::CapExceeded { .. }) if mc.is_some() => {
            let n_eta = code.n as f64 * slack.eta;
            let (est, surrogate) = mc_output_tail(mixed, input, code.n, code.log_m + n_eta, mc.unwrap())?;
            Ok(BoundEstimate {
                value: (est.value + (-n_eta).exp()).min(1.0),
                kind: BoundKind::Feinstein,
                surrogate,
                ..est
            })
        }
        Err(e) => Err(e),
    }
}

/// `Pr{(1/n) log W^n/P_{Y^n} <= (1/n) ln M}` without slack terms.
pub fn spectrum_tail(mixed: &MixedChannel, input: &InputLaw, code: &CodeParams, mc: Option<McConfig>) -> Result<BoundEstimate> {
    match evaluator(BoundKind::ExactTail, mixed, input, code.n, &[], 1.0) {
        Ok(ev) => Ok(ev.estimate(code.log_m)),
        Err(Error::CapExceeded { .. }) if mc.is_some() => {
            let (est, surrogate) = mc_output_tail(mixed, input, code.n, code.log_m, mc.unwrap())?;
            Ok(BoundEstimate { surrogate, ..est })
        }
        Err(e) => Err(e),
    }
}

/// Converse: `Pr{(1/n) log W^n/Q^n <= (1/n) ln M − η} − e^{−nη}`, clipped
/// to `[0, 1]`, with `W^n` the mixture law.
pub fn hayashi_nagaoka_bound(
    mixed: &MixedChannel,
    input: &InputLaw,
    code: &CodeParams,
    q: &QFamily,
    slack: &SlackParams,
) -> Result<BoundEstimate> {
    check_slack(slack)?;
    Ok(evaluator(BoundKind::HayashiNagaoka, mixed, input, code.n, std::slice::from_ref(q), slack.eta)?.estimate(code.log_m))
}

/// Converse for mixtures: `Σ_θ w_θ Pr_θ{(1/n) log W_θ^n/Q_θ^n <= (1/n) ln M − η}
/// − e^{−nη}`, clipped to `[0, 1]`, one reference per component.
pub fn mixed_converse_bound(
    mixed: &MixedChannel,
    input: &InputLaw,
    code: &CodeParams,
    q: &[QFamily],
    slack: &SlackParams,
) -> Result<BoundEstimate> {
    check_slack(slack)?;
    Ok(evaluator(BoundKind::MixedConverse, mixed, input, code.n, q, slack.eta)?.estimate(code.log_m))
}

/// Largest rate `(1/n) ln M` at which the bound is at most `eps`. `None` if
/// even `M = 1` exceeds `eps`; `+inf` if no rate does.
///
/// For Feinstein this is an achievable rate; for the converses an upper
/// bound on the rate of any code with error at most `eps`.
pub fn crossing_rate(
    kind: BoundKind,
    mixed: &MixedChannel,
    input: &InputLaw,
    n: usize,
    q: &[QFamily],
    slack: &SlackParams,
    eps: f64,
) -> Result<Option<f64>> {
    check_slack(slack)?;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps must lie in [0, 1], got {eps}")));
    }
    let ev = evaluator(kind, mixed, input, n, q, slack.eta)?;
    if ev.value(0.0) > eps {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while ev.value(hi) <= eps {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 * n as f64 {
            return Ok(Some(f64::INFINITY));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ev.value(mid) <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo / n as f64))
}

/// `n c + √n d`, the normal approximation of `ln M*` in nats.
pub fn normal_approx(n: usize, c_first: f64, d_second: f64) -> f64 {
    n as f64 * c_first + (n as f64).sqrt() * d_second
}
