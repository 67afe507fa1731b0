//! `fdchange`: change-in-mean tests for samples of curves.
//!
//! Exit codes: 0 no change detected, 1 change detected, 2 error.

mod error;
mod ingest;
mod report;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdchange::cptest::Mode;
use fdchange::limitsim::{
    cache_dir_from_env, cached_limit_quantiles, comparison_configs, power_study, simulate_curves, write_power_csv,
    CriticalValueTable, Drift, GaussianProcess, Preprocess, SimConfig, DEFAULT_BRIDGE_GRID, DEFAULT_TABLE_REPS,
};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fdchange", version, about = "Change-in-mean tests for functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test a CSV of curves (one curve per row) for a change in mean.
    Test(run::TestArgs),
    /// Simulate critical values of the limit distribution.
    Tables(TablesArgs),
    /// Monte Carlo power of the H and S tests.
    Power(PowerArgs),
    /// Write a synthetic sample as CSV.
    #[command(hide = true)]
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "H", alias = "h")]
    H,
    #[value(name = "S", alias = "s")]
    S,
    #[value(name = "both")]
    Both,
}

impl ModeArg {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::H => vec![Mode::H],
            ModeArg::S => vec![Mode::S],
            ModeArg::Both => vec![Mode::H, Mode::S],
        }
    }
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long, default_value_t = 5)]
    d_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.10,0.05,0.01")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_TABLE_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_BRIDGE_GRID)]
    bridge_grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// N = 100, d = 3, ten change indices, three scenarios.
    Comparison,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// `bm` or `bb`.
    #[arg(long, default_value = "bm")]
    process: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Change indices; 0 simulates the null.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    k_star: Vec<usize>,
    #[arg(long, default_value = "t")]
    drift: String,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 1000)]
    gen_grid: usize,
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// `smooth`, `smooth:<basis size>`, `resample` or `raw`.
    #[arg(long, default_value = "smooth")]
    preprocess: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "H,S")]
    modes: Vec<ModeArg>,
    /// Critical values from a CSV instead of simulation.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TABLE_REPS)]
    table_reps: usize,
    #[arg(long, default_value_t = 0)]
    table_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value = "bm")]
    process: String,
    /// `k:drift:scale`; curves after `k` get `scale * drift(t)` added.
    #[arg(long)]
    shift: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write abscissae `1..=m` as a header row.
    #[arg(long)]
    header: bool,
    /// Label rows with consecutive integers starting here.
    #[arg(long)]
    labels_start: Option<i64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_tables(args: &TablesArgs) -> Result<u8, CliError> {
    let table = cached_limit_quantiles(
        cache_dir_from_env().as_deref(),
        args.d_max,
        &args.alphas,
        args.reps,
        args.bridge_grid,
        args.seed,
    )?;
    table.write_csv(output(args.out.as_ref())?)?;
    Ok(0)
}

fn power_configs(args: &PowerArgs) -> Result<Vec<SimConfig>, CliError> {
    if let Some(Preset::Comparison) = args.preset {
        let mut configs = comparison_configs(args.reps, args.seed);
        for c in &mut configs {
            c.validate()?;
        }
        return Ok(configs);
    }
    let process: GaussianProcess = args.process.parse()?;
    let drift: Drift = args.drift.parse()?;
    let preprocess: Preprocess = args.preprocess.parse()?;
    args.k_star
        .iter()
        .map(|&k| {
            let mut c = SimConfig::new(process, drift, k, args.reps, args.seed);
            c.n = args.n;
            c.d = args.d;
            c.alpha = args.alpha;
            c.gen_grid = args.gen_grid;
            c.work_grid = args.grid;
            c.preprocess = preprocess;
            c.validate()?;
            Ok(c)
        })
        .collect()
}

fn cmd_power(args: &PowerArgs) -> Result<u8, CliError> {
    let configs = power_configs(args)?;
    let mut modes: Vec<Mode> = args.modes.iter().flat_map(|m| m.modes()).collect();
    modes.dedup();
    let d_max = configs.iter().map(|c| c.d).max().unwrap_or(1);
    let mut alphas: Vec<f64> = configs.iter().map(|c| c.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let table = match &args.table {
        Some(path) => CriticalValueTable::read_csv(std::fs::File::open(path)?)?,
        None => cached_limit_quantiles(
            cache_dir_from_env().as_deref(),
            d_max,
            &alphas,
            args.table_reps,
            DEFAULT_BRIDGE_GRID,
            args.table_seed,
        )?,
    };
    let mut rows = Vec::new();
    for c in &configs {
        rows.extend(power_study(c, &modes, &table)?);
    }
    write_power_csv(&rows, output(args.out.as_ref())?)?;
    Ok(0)
}

fn parse_shift(spec: &str) -> Result<(usize, Drift, f64), CliError> {
    let bad = || CliError::Usage(format!("bad --shift `{spec}` (expected k:drift:scale)"));
    let mut parts = spec.splitn(3, ':');
    let k = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let drift = parts.next().ok_or_else(bad)?.parse()?;
    let scale = parts.next().map_or(Ok(1.0), str::parse).map_err(|_| bad())?;
    Ok((k, drift, scale))
}

fn cmd_synth(args: &SynthArgs) -> Result<u8, CliError> {
    let process: GaussianProcess = args.process.parse()?;
    let grid = std::sync::Arc::new(fdchange::QuadratureGrid64::new(
        args.m,
        fdchange::fdobj::QuadratureRule::Trapezoid,
    )?);
    let mut curves = simulate_curves(process, grid, args.n, args.seed)?;
    for spec in &args.shift {
        let (k, drift, scale) = parse_shift(spec)?;
        curves = fdchange::limitsim::apply_scaled_drift(&curves, drift, scale, k)?;
    }
    let mut w = csv::Writer::from_writer(output(args.out.as_ref())?);
    if args.header {
        let mut head: Vec<String> = Vec::new();
        if args.labels_start.is_some() {
            head.push("label".into());
        }
        head.extend((1..=args.m).map(|j| j.to_string()));
        w.write_record(&head)?;
    }
    for i in 0..curves.n() {
        let mut rec: Vec<String> = Vec::new();
        if let Some(start) = args.labels_start {
            rec.push((start + i as i64).to_string());
        }
        rec.extend(curves.curve_vec(i).iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Test(args) => run::cmd_test(args),
        Command::Tables(args) => cmd_tables(args),
        Command::Power(args) => cmd_power(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(fdchange::Error::TableMiss { .. }) = e {
                eprintln!("hint: generate critical values with `fdchange tables` or allow simulation");
            }
            ExitCode::from(2)
        }
    }
}
