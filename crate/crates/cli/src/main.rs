//! `mixcap` command-line front end.

mod commands;
mod output;
mod spec;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commands::*;
use output::{RunManifest, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mixcap", version, about = "Coding rates of mixed memoryless channels")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the result here (plus a `.manifest.json` sidecar) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Capacity of every component under the cost budget.
    Capacity(CapacityArgs),
    /// ε-capacity of the mixture.
    EpsCapacity(EpsCapacityArgs),
    /// Second-order rate: a lower bound, or the exact value with --well-ordered.
    SecondOrder(SecondOrderArgs),
    /// Checks whether the component family is well-ordered.
    CheckWellOrdered(CheckArgs),
    /// Finite-blocklength bounds on the error probability.
    Fbl(FblArgs),
    /// Numerical checks of the decomposition inequalities and expurgation mass.
    ValidateLemmas(LemmaArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Capacity(_) => "capacity",
            Command::EpsCapacity(_) => "eps-capacity",
            Command::SecondOrder(_) => "second-order",
            Command::CheckWellOrdered(_) => "check-well-ordered",
            Command::Fbl(_) => "fbl",
            Command::ValidateLemmas(_) => "validate-lemmas",
        }
    }

    fn spec_path(&self) -> &Path {
        match self {
            Command::Capacity(a) => &a.spec.spec,
            Command::EpsCapacity(a) => &a.spec.spec,
            Command::SecondOrder(a) => &a.spec.spec,
            Command::CheckWellOrdered(a) => &a.spec.spec,
            Command::Fbl(a) => &a.spec.spec,
            Command::ValidateLemmas(a) => &a.spec.spec,
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::EpsCapacity(a) => Some(a.seed),
            Command::SecondOrder(a) => Some(a.seed),
            Command::Fbl(a) => Some(a.seed),
            _ => None,
        }
    }

    fn run(&self) -> Result<Table> {
        match self {
            Command::Capacity(a) => capacity(a),
            Command::EpsCapacity(a) => eps_capacity_cmd(a),
            Command::SecondOrder(a) => second_order(a),
            Command::CheckWellOrdered(a) => check(a),
            Command::Fbl(a) => fbl(a),
            Command::ValidateLemmas(a) => validate_lemmas(a),
        }
    }
}

fn write_table(table: &Table, format: Format, out: impl Write) -> Result<()> {
    match format {
        Format::Csv => table.write_csv(out),
        Format::Json => table.write_json(out),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("--threads")?;
    }
    let start = Instant::now();
    let table = cli.command.run()?;
    let manifest = RunManifest {
        command: cli.command.name().into(),
        spec: cli.command.spec_path().display().to_string(),
        parameters: serde_json::to_value(&cli.command)?,
        seed: cli.command.seed(),
        versions: RunManifest::versions(),
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    log::debug!("{} produced {} row(s)", manifest.command, table.len());
    match &cli.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(f);
            write_table(&table, cli.format, &mut w)?;
            w.flush()?;
            let mpath = manifest_path(path);
            let m = File::create(&mpath).with_context(|| format!("cannot create {}", mpath.display()))?;
            serde_json::to_writer_pretty(BufWriter::new(m), &manifest)?;
        }
        None => {
            write_table(&table, cli.format, io::stdout().lock())?;
            log::info!("manifest: {}", serde_json::to_string(&manifest)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<mixcap::Error>()) {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXCAP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
