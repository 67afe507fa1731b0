//! The `test` subcommand.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, ValueEnum};
use fdchange::covkernel::pooled_kernel;
use fdchange::cptest::{
    binary_segmentation_with, resolve_dimension, run_tests, CusumProcess, DimensionRule, Engine, Mode, NodeStatus,
    SegmentationConfig, TestConfig, TestResult,
};
use fdchange::fdobj::{BSplineBasis, CurveSet, QuadratureGrid, QuadratureRule, Smoother};
use fdchange::limitsim::{
    cache_dir_from_env, cached_limit_quantiles, CriticalValueTable, DEFAULT_BRIDGE_GRID, DEFAULT_PVALUE_REPS,
};
use fdchange::spectral::{align_sign, eigendecompose};
use fdchange::Error;

use crate::error::CliError;
use crate::ingest::{ingest_csv, Ingested, Layout};
use crate::report::{
    curve_label, ChangePoints, InputSummary, PlotRow, RunReport, SegmentRow, Settings, TableSummary, SCHEMA_VERSION,
};
use crate::ModeArg;

const DEFAULT_WORKING_GRID: usize = 201;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EngineArg {
    RankOne,
    Direct,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// CSV with one curve per row.
    #[arg(long)]
    pub input: PathBuf,
    /// First row holds the sampling abscissae.
    #[arg(long)]
    pub header: bool,
    /// First column holds row labels (e.g. years).
    #[arg(long)]
    pub labels: bool,
    /// Number of eigenfunctions [default: 3].
    #[arg(long, conflicts_with = "explained_fraction")]
    pub d: Option<usize>,
    /// Choose d as the smallest dimension explaining this share of variance.
    #[arg(long)]
    pub explained_fraction: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "H")]
    pub mode: ModeArg,
    /// Working grid size. Without --basis the curves are linearly resampled.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Cubic B-spline basis size for least-squares smoothing.
    #[arg(long)]
    pub basis: Option<usize>,
    /// Limit draws for simulated critical values and p-values.
    #[arg(long, default_value_t = DEFAULT_PVALUE_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_BRIDGE_GRID)]
    pub bridge_grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Critical values as written by `fdchange tables`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Fail instead of simulating missing critical values.
    #[arg(long)]
    pub no_simulate: bool,
    /// Binary segmentation for multiple change points.
    #[arg(long)]
    pub segment: bool,
    #[arg(long, default_value_t = fdchange::cptest::MIN_SEGMENT_FLOOR)]
    pub min_segment: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub plotdata: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rank-one")]
    pub engine: EngineArg,
}

struct Prepared {
    curves: CurveSet<f64>,
    preprocessing: &'static str,
    basis_size: Option<usize>,
}

fn prepare(ing: &Ingested, args: &TestArgs) -> Result<Prepared, CliError> {
    let raw = &ing.curves;
    let working = |m: usize| -> Result<Arc<QuadratureGrid<f64>>, CliError> {
        Ok(Arc::new(QuadratureGrid::new(m, QuadratureRule::Trapezoid)?))
    };
    Ok(match (args.basis, args.grid) {
        (Some(b), grid) => {
            let size = BSplineBasis::<f64>::default_size(raw.m(), Some(b));
            let basis = BSplineBasis::cubic(size)?;
            let out = working(grid.unwrap_or(DEFAULT_WORKING_GRID))?;
            Prepared {
                curves: Smoother::new(raw.abscissae(), &basis, out)?.apply(raw)?,
                preprocessing: "smooth",
                basis_size: Some(size),
            }
        }
        (None, Some(m)) => Prepared {
            curves: CurveSet::resample_linear(raw, working(m)?)?,
            preprocessing: "resample",
            basis_size: None,
        },
        (None, None) => Prepared {
            curves: CurveSet::from_raw(raw, QuadratureRule::Trapezoid)?,
            preprocessing: "raw",
            basis_size: None,
        },
    })
}

fn simulate_table(args: &TestArgs, d_max: usize) -> Result<CriticalValueTable, CliError> {
    Ok(cached_limit_quantiles(
        cache_dir_from_env().as_deref(),
        d_max,
        &[args.alpha],
        args.reps,
        args.bridge_grid,
        args.seed,
    )?)
}

fn initial_table(args: &TestArgs, d: usize) -> Result<(CriticalValueTable, Option<String>), CliError> {
    match &args.table {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let table = CriticalValueTable::read_csv(file)?;
            if table.contains(d, args.alpha) || args.no_simulate {
                Ok((table, Some(path.display().to_string())))
            } else {
                Ok((simulate_table(args, d)?, None))
            }
        }
        None if args.no_simulate => Err(CliError::Usage(
            "no critical-value table given and --no-simulate is set; \
             create one with `fdchange tables --out FILE` and pass --table FILE"
                .into(),
        )),
        None => Ok((simulate_table(args, d)?, None)),
    }
}

struct Analysis {
    rows: Vec<SegmentRow>,
    change_points: Vec<ChangePoints>,
    /// `(mode, segment label, process)` for every tested segment.
    processes: Vec<(Mode, String, CusumProcess<f64>)>,
    /// Final segments of the first mode, zero-based half-open.
    pieces: Vec<(usize, usize)>,
}

fn segment_label(labels: Option<&[String]>, start: usize, end: usize) -> String {
    format!("{}-{}", curve_label(labels, start), curve_label(labels, end - 1))
}

fn row_from(
    mode: Mode,
    depth: usize,
    (start, end): (usize, usize),
    status: NodeStatus,
    result: Option<&TestResult>,
    labels: Option<&[String]>,
) -> SegmentRow {
    let change_point = result.filter(|r| r.reject).map(|r| start + r.change_index);
    SegmentRow {
        mode,
        depth,
        first: start + 1,
        last: end,
        segment: segment_label(labels, start, end),
        status,
        d: result.map(|r| r.d),
        statistic: result.map(|r| r.statistic),
        critical_value: result.map(|r| r.critical_value),
        p_value: result.and_then(|r| r.p_value),
        theta_hat: result.map(|r| r.theta_hat),
        change_point,
        change_label: change_point.map(|c| curve_label(labels, c - 1)),
    }
}

fn change_points_of(mode: Mode, mut indices: Vec<usize>, labels: Option<&[String]>) -> ChangePoints {
    indices.sort_unstable();
    ChangePoints {
        mode,
        labels: labels.map(|l| indices.iter().map(|&c| curve_label(Some(l), c - 1)).collect()),
        indices,
    }
}

fn analyse(
    curves: &CurveSet<f64>,
    config: &TestConfig,
    modes: &[Mode],
    table: &CriticalValueTable,
    args: &TestArgs,
    labels: Option<&[String]>,
) -> Result<Analysis, CliError> {
    let n = curves.n();
    let mut out = Analysis {
        rows: Vec::new(),
        change_points: Vec::new(),
        processes: Vec::new(),
        pieces: Vec::new(),
    };
    if !args.segment {
        let outcomes = run_tests(curves, config, modes, table)?;
        for (i, o) in outcomes.into_iter().enumerate() {
            let r = &o.result;
            let status = if r.reject { NodeStatus::Rejected } else { NodeStatus::Accepted };
            out.rows.push(row_from(r.mode, 0, (0, n), status, Some(r), labels));
            let cps = if r.reject { vec![r.change_index] } else { Vec::new() };
            if i == 0 {
                out.pieces = match cps.first() {
                    Some(&c) => vec![(0, c), (c, n)],
                    None => vec![(0, n)],
                };
            }
            out.change_points.push(change_points_of(r.mode, cps, labels));
            out.processes.push((r.mode, segment_label(labels, 0, n), o.process));
        }
        return Ok(out);
    }
    for (i, &mode) in modes.iter().enumerate() {
        let seg_config = SegmentationConfig {
            test: *config,
            mode,
            min_segment: args.min_segment,
        };
        let mut visited = Vec::new();
        let tree = binary_segmentation_with(curves, &seg_config, table, |id, o| {
            visited.push((id, o.process.clone()));
        })?;
        for (id, process) in visited {
            let node = &tree.nodes[id];
            out.processes.push((mode, segment_label(labels, node.start, node.end), process));
        }
        for node in &tree.nodes {
            out.rows.push(row_from(
                mode,
                node.depth,
                (node.start, node.end),
                node.status,
                node.result.as_ref(),
                labels,
            ));
        }
        if i == 0 {
            out.pieces = tree.leaves().map(|l| (l.start, l.end)).collect();
            out.pieces.sort_unstable();
        }
        out.change_points.push(change_points_of(mode, tree.change_points, labels));
    }
    Ok(out)
}

fn write_plotdata(
    path: &PathBuf,
    curves: &CurveSet<f64>,
    analysis: &Analysis,
    d: usize,
    primary: Mode,
    labels: Option<&[String]>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for (mode, segment, process) in &analysis.processes {
        let n = process.n() as f64;
        for (k, &v) in process.values().iter().enumerate() {
            w.serialize(PlotRow {
                series: "cusum",
                mode: mode.to_string(),
                segment: segment.clone(),
                index: k + 1,
                x: (k + 1) as f64 / n,
                value: v,
            })?;
        }
    }
    let points = curves.grid().points();
    for &(a, b) in &analysis.pieces {
        let mean = curves.segment(a, b)?.mean_curve();
        let segment = segment_label(labels, a, b);
        for (&x, &value) in points.iter().zip(&mean) {
            w.serialize(PlotRow {
                series: "segment_mean",
                mode: primary.to_string(),
                segment: segment.clone(),
                index: b - a,
                x,
                value,
            })?;
        }
    }
    let kernel = pooled_kernel(curves)?;
    if let Ok(system) = eigendecompose(&kernel, d.min(curves.m())) {
        let system = align_sign(system, None);
        let all = segment_label(labels, 0, curves.n());
        for l in 0..system.d() {
            for (&x, &value) in points.iter().zip(&system.eigenfunction(l)) {
                w.serialize(PlotRow {
                    series: "eigenfunction",
                    mode: "pooled".into(),
                    segment: all.clone(),
                    index: l + 1,
                    x,
                    value,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn print_summary(report: &RunReport) {
    for row in &report.segments {
        let indent = "  ".repeat(row.depth);
        let status = match row.status {
            NodeStatus::Accepted => "no change",
            NodeStatus::Rejected => "change",
            NodeStatus::TooShort => "too short",
            NodeStatus::Degenerate => "constant",
        };
        match (row.statistic, row.critical_value) {
            (Some(s), Some(k)) => {
                let p = row.p_value.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
                let at = row
                    .change_label
                    .as_deref()
                    .map(|l| format!(" at {l}"))
                    .unwrap_or_default();
                println!(
                    "{} {indent}{}: stat {s:.4}, K {k:.4}, p {p}, {status}{at}",
                    row.mode, row.segment
                );
            }
            _ => println!("{} {indent}{}: {status}", row.mode, row.segment),
        }
    }
    for cp in &report.change_points {
        let shown = match &cp.labels {
            Some(l) => l.join(", "),
            None => cp.indices.iter().map(usize::to_string).collect::<Vec<_>>().join(", "),
        };
        println!("change points ({}): {}", cp.mode, if shown.is_empty() { "none" } else { &shown });
    }
}

pub fn cmd_test(args: &TestArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let ing = ingest_csv(
        &args.input,
        Layout {
            header: args.header,
            labels: args.labels,
        },
    )?;
    let labels = ing.labels.as_deref();
    let prepared = prepare(&ing, args)?;
    let curves = &prepared.curves;

    let dims = match (args.d, args.explained_fraction) {
        (_, Some(f)) => DimensionRule::ExplainedFraction(f),
        (Some(d), None) => DimensionRule::Fixed(d),
        (None, None) => DimensionRule::Fixed(3),
    };
    let mut config = TestConfig::new(dims, args.alpha);
    config.engine = match args.engine {
        EngineArg::RankOne => Engine::RankOne,
        EngineArg::Direct => Engine::Direct,
    };
    let modes = args.mode.modes();
    let root_d = resolve_dimension(curves, dims)?;

    let (mut table, mut source) = initial_table(args, root_d)?;
    let mut d_max = root_d;
    let analysis = loop {
        match analyse(curves, &config, &modes, &table, args, labels) {
            Ok(a) => break a,
            Err(CliError::Core(Error::TableMiss { d, .. })) if !args.no_simulate && d > d_max => {
                d_max = d;
                table = simulate_table(args, d_max)?;
                source = None;
            }
            Err(e) => return Err(e),
        }
    };

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        input: InputSummary {
            path: args.input.display().to_string(),
            n: curves.n(),
            raw_points: ing.curves.m(),
            working_points: curves.m(),
            preprocessing: prepared.preprocessing.to_string(),
            basis_size: prepared.basis_size,
            abscissae_rescaled_from: ing.rescaled_from,
            labelled: labels.is_some(),
        },
        settings: Settings {
            dims,
            alpha: args.alpha,
            modes: modes.clone(),
            segment: args.segment,
            min_segment: args.min_segment,
            engine: config.engine,
        },
        table: TableSummary {
            provenance: table.provenance().clone(),
            source,
        },
        segments: analysis.rows.clone(),
        change_points: analysis.change_points.clone(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };

    print_summary(&report);
    if let Some(path) = &args.plotdata {
        write_plotdata(path, curves, &analysis, root_d, modes[0], labels)?;
    }
    if let Some(path) = &args.json {
        let file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
    }
    Ok(u8::from(report.rejected(modes[0])))
}
