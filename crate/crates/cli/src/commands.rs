//! Subcommand arguments and their evaluation into result tables.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mixcap::second_order::DEFAULT_TIE_TOL;
use mixcap::well_ordered::{check_well_ordered_at, DEFAULT_GRID, DEFAULT_ORDER_TOL};
use mixcap::*;
use serde::Serialize;

use crate::output::{Cell, Table};
use crate::spec::{load_spec, LoadedSpec};

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpecArgs {
    /// Channel spec file (JSON).
    pub spec: PathBuf,
    /// Cost budget; overrides `gamma` in the spec file.
    #[arg(long, conflicts_with = "unconstrained")]
    pub gamma: Option<f64>,
    /// Ignore any budget in the spec file.
    #[arg(long)]
    pub unconstrained: bool,
}

impl SpecArgs {
    pub fn load(&self) -> Result<LoadedSpec> {
        let mut s = load_spec(&self.spec)?;
        if let Some(g) = self.gamma {
            s.cost = s.cost.with_budget(Budget::Limit(g)).context("--gamma")?;
        } else if self.unconstrained {
            s.cost = s.cost.with_budget(Budget::Unconstrained).context("--unconstrained")?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EpsCapacityArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub eps: f64,
    /// Use the closed form for well-ordered mixtures (refused otherwise).
    #[arg(long)]
    pub well_ordered: bool,
    /// Grid subdivisions of the input search.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Seed of the random search starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SecondOrderArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub eps: f64,
    /// First-order rate R in nats; defaults to the ε-capacity.
    #[arg(long, conflicts_with = "well_ordered")]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
    /// Report the exact second-order rate after verifying well-orderedness.
    #[arg(long)]
    pub well_ordered: bool,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CheckArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Grid used to sample capacity-achieving sets.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundArg {
    Feinstein,
    Hn,
    MixedConverse,
    Exact,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FblArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Blocklength.
    #[arg(long)]
    pub n: usize,
    /// Rate (1/n) ln M in nats.
    #[arg(long)]
    pub rate: f64,
    #[arg(long, value_enum, default_value_t = BoundArg::Feinstein)]
    pub bound: BoundArg,
    /// Per-letter slack; defaults to 1/sqrt(n).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Also report the largest rate whose bound stays at most this value.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Monte-Carlo trials used when the exact spectrum exceeds its caps (0 disables).
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input distribution as comma-separated probabilities; uniform by default.
    #[arg(long)]
    pub input: Option<String>,
    /// Use the constant-composition input closest to `--input`.
    #[arg(long)]
    pub composition: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LemmaArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Blocklengths to check (repeatable).
    #[arg(long, default_values_t = [8usize, 12, 16])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub z_points: usize,
    /// The 1/sqrt(n)-scale slack of the decomposition inequalities.
    #[arg(long, default_value_t = 1.0)]
    pub gamma_slack: f64,
    #[arg(long)]
    pub input: Option<String>,
}

fn search_config(grid: usize, seed: u64) -> SearchConfig {
    SearchConfig {
        grid_steps: grid,
        seed,
        ..SearchConfig::default()
    }
}

fn parse_input(text: Option<&str>, spec: &LoadedSpec) -> Result<InputDist> {
    let k = spec.channel.num_inputs();
    let p = match text {
        None => InputDist::uniform(k),
        Some(t) => {
            let probs = t
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .context("--input: expected comma-separated numbers")?;
            if probs.len() != k {
                bail!("--input: has {} entries, the channel has {k} inputs", probs.len());
            }
            InputDist::new(probs).context("--input")?
        }
    };
    if !spec.cost.admits(p.probs()) {
        bail!("--input: expected cost {} exceeds the budget", p.expected_cost(&spec.cost));
    }
    Ok(p)
}

pub fn capacity(args: &CapacityArgs) -> Result<Table> {
    let s = args.spec.load()?;
    let mut t = Table::new("capacity", &["component", "weight", "capacity", "optimal_input", "multiplier", "kt_slack"]);
    for (k, a) in s.channel.atoms().iter().enumerate() {
        let r = constrained_capacity(&a.channel, &s.cost, 1e-12)?;
        t.push(
            vec![
                k.into(),
                a.weight.into(),
                r.capacity.into(),
                Cell::List(r.optimal_input.probs().to_vec()),
                r.multiplier.into(),
                r.kt_slack.into(),
            ],
            &Method::Exact.to_string(),
        );
    }
    Ok(t)
}

pub fn eps_capacity_cmd(args: &EpsCapacityArgs) -> Result<Table> {
    let s = args.spec.load()?;
    let (r, method) = if args.well_ordered {
        (eps_capacity_well_ordered(&s.channel, &s.cost, args.eps)?, Method::ExactFormula)
    } else {
        (eps_capacity(&s.channel, &s.cost, args.eps, &search_config(args.grid, args.seed))?, Method::LowerBound)
    };
    let mut t = Table::new(
        "eps-capacity",
        &["eps", "capacity", "argmax_input", "achieving_component", "mass_below", "mass_at_or_below"],
    );
    t.push(
        vec![
            args.eps.into(),
            r.capacity.into(),
            Cell::List(r.argmax_input.probs().to_vec()),
            r.achieving_component.into(),
            r.mass_below.into(),
            r.mass_at_or_below.into(),
        ],
        &method.to_string(),
    );
    Ok(t)
}

pub fn second_order(args: &SecondOrderArgs) -> Result<Table> {
    let s = args.spec.load()?;
    let r = if args.well_ordered {
        let report = check_well_ordered_at(&s.channel, &s.cost, DEFAULT_ORDER_TOL, args.grid)?;
        if !report.is_well_ordered {
            eprintln!("{}", serde_json::to_string_pretty(&report)?);
            return Err(Error::NotWellOrdered {
                violations: report.violations.len(),
            }
            .into());
        }
        second_order_well_ordered(&s.channel, &s.cost, args.eps, args.tie_tol)?
    } else {
        let search = search_config(args.grid, args.seed);
        let rate = match args.rate {
            Some(r) => r,
            None => eps_capacity(&s.channel, &s.cost, args.eps, &search)?.capacity,
        };
        second_order_lb(&s.channel, &s.cost, rate, args.eps, args.tie_tol, &search)?
    };
    let mut t = Table::new(
        "second-order",
        &["eps", "rate", "s_value", "open_boundary", "input", "gw_at_solution", "tied_mass"],
    );
    t.push(
        vec![
            args.eps.into(),
            r.rate.into(),
            r.s_value.to_f64().into(),
            r.open_boundary.into(),
            Cell::List(r.input.probs().to_vec()),
            r.gw_at_solution.into(),
            r.theta2_mass.into(),
        ],
        &r.method.to_string(),
    );
    Ok(t)
}

pub fn check(args: &CheckArgs) -> Result<Table> {
    let s = args.spec.load()?;
    let r = check_well_ordered_at(&s.channel, &s.cost, args.tol, args.grid)?;
    let mut t = Table::new(
        "check-well-ordered",
        &["well_ordered", "theta", "theta_prime", "input", "observed", "required"],
    );
    if r.violations.is_empty() {
        t.push(vec![true.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty], "exact");
    }
    for v in &r.violations {
        let required = match v.required {
            well_ordered::Relation::EqualAtTie => "equal-at-tie",
            well_ordered::Relation::StrictlyAbove => "strictly-above",
        };
        t.push(
            vec![
                false.into(),
                v.theta.into(),
                v.theta_prime.into(),
                Cell::List(v.input.probs().to_vec()),
                v.observed.into(),
                required.into(),
            ],
            "exact",
        );
    }
    log::info!("well-orderedness coverage: {}", r.coverage);
    Ok(t)
}

fn bound_kind(b: BoundArg) -> BoundKind {
    match b {
        BoundArg::Feinstein => BoundKind::Feinstein,
        BoundArg::Hn => BoundKind::HayashiNagaoka,
        BoundArg::MixedConverse => BoundKind::MixedConverse,
        BoundArg::Exact => BoundKind::ExactTail,
    }
}

pub fn fbl(args: &FblArgs) -> Result<Table> {
    let s = args.spec.load()?;
    let m = &s.channel;
    let p = parse_input(args.input.as_deref(), &s)?;
    let code = CodeParams::from_rate(args.n, args.rate).context("--n/--rate")?;
    let eta = args.eta.unwrap_or(1.0 / (args.n as f64).sqrt());
    let slack = SlackParams::new(eta, 1.0, 0.0).context("--eta")?;
    let input = if args.composition {
        InputLaw::Composition(quantized_type(&p, args.n, &s.cost)?)
    } else {
        InputLaw::Iid(p.clone())
    };
    let ref_input = input.dist();
    let mc = (args.trials > 0).then_some(McConfig {
        trials: args.trials,
        seed: args.seed,
    });

    let component_refs = || -> Result<Vec<QFamily>> {
        m.atoms()
            .iter()
            .map(|a| Ok(QFamily::Product(output_distribution(&ref_input, &a.channel)?)))
            .collect()
    };
    let refs: Vec<QFamily> = match args.bound {
        BoundArg::Feinstein | BoundArg::Exact => Vec::new(),
        BoundArg::MixedConverse => component_refs()?,
        BoundArg::Hn => {
            let mut q = vec![0.0; m.num_outputs()];
            for a in m.atoms() {
                for (qy, v) in q.iter_mut().zip(output_distribution(&ref_input, &a.channel)?) {
                    *qy += a.weight * v;
                }
            }
            vec![QFamily::Product(q)]
        }
    };
    let est = match args.bound {
        BoundArg::Feinstein => feinstein_bound(m, &input, &code, &slack, mc)?,
        BoundArg::Exact => spectrum_tail(m, &input, &code, mc)?,
        BoundArg::Hn => hayashi_nagaoka_bound(m, &input, &code, &refs[0], &slack)?,
        BoundArg::MixedConverse => mixed_converse_bound(m, &input, &code, &refs, &slack)?,
    };
    let crossing = match args.eps {
        Some(eps) => crossing_rate(bound_kind(args.bound), m, &input, args.n, &refs, &slack, eps)?,
        None => None,
    };
    let mut t = Table::new(
        "fbl",
        &[
            "n", "rate", "log_m", "bound", "eta", "value", "stderr", "trials", "seed", "surrogate", "eps", "crossing_rate",
        ],
    );
    t.push(
        vec![
            args.n.into(),
            args.rate.into(),
            code.log_m.into(),
            est.kind.to_string().into(),
            eta.into(),
            est.value.into(),
            est.stderr.into(),
            est.trials.into(),
            est.seed.into(),
            est.surrogate.into(),
            args.eps.into(),
            crossing.into(),
        ],
        &est.method.to_string(),
    );
    Ok(t)
}

pub fn validate_lemmas(args: &LemmaArgs) -> Result<Table> {
    let s = args.spec.load()?;
    let m = &s.channel;
    let p = parse_input(args.input.as_deref(), &s)?;
    let mut t = Table::new("validate-lemmas", &["check", "n", "points", "violations", "mass", "bound", "passed"]);
    for &n in &args.n {
        let comp = quantized_type(&p, n, &s.cost)?;
        let q: Vec<Vec<f64>> = m
            .atoms()
            .iter()
            .map(|a| output_distribution(&comp.to_dist(), &a.channel))
            .collect::<mixcap::Result<_>>()?;
        let d = decomposition_check(m, &comp, &q, args.gamma_slack, args.z_points)?;
        t.push(
            vec![
                "decomposition".into(),
                n.into(),
                d.checked.into(),
                d.violations.len().into(),
                Cell::Empty,
                Cell::Empty,
                d.passed().into(),
            ],
            "exact",
        );
        let e = expurgated_space(m, &q, n)?;
        t.push(
            vec![
                "expurgation".into(),
                n.into(),
                m.len().into(),
                Cell::Empty,
                e.mass.into(),
                e.bound.into(),
                (e.mass >= e.bound).into(),
            ],
            "exact",
        );
    }
    Ok(t)
}
