use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{add_drift_rows, Drift, GaussianProcess};
use super::table::CriticalValueTable;
use crate::cptest::downdate::PooledBasis;
use crate::cptest::{estimate_change_point, h_statistic, rank_one_process, Mode, ProcessOptions};
use crate::error::{invalid, Error, Result};
use crate::fdobj::{linear_interpolation_map, BSplineBasis, CurveSet, Provenance, QuadratureGrid, QuadratureRule, Smoother};

/// How generated curves reach the working grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preprocess {
    /// Least-squares cubic B-spline fit; `basis: None` takes the default size.
    Smooth { basis: Option<usize> },
    /// Piecewise-linear interpolation.
    Resample,
    /// Statistic computed on the generation grid itself.
    Raw,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess::Smooth { basis: None }
    }
}

impl std::fmt::Display for Preprocess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Preprocess::Smooth { basis: None } => f.write_str("smooth"),
            Preprocess::Smooth { basis: Some(b) } => write!(f, "smooth:{b}"),
            Preprocess::Resample => f.write_str("resample"),
            Preprocess::Raw => f.write_str("raw"),
        }
    }
}

impl std::str::FromStr for Preprocess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "smooth" => Ok(Preprocess::Smooth { basis: None }),
            "resample" | "fast" => Ok(Preprocess::Resample),
            "raw" => Ok(Preprocess::Raw),
            other => match other.strip_prefix("smooth:") {
                Some(b) => b
                    .parse()
                    .map(|b| Preprocess::Smooth { basis: Some(b) })
                    .map_err(|_| invalid(format!("bad basis size in `{other}`"))),
                None => Err(invalid(format!(
                    "unknown preprocessing `{other}` (expected smooth, smooth:<size>, resample or raw)"
                ))),
            },
        }
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub process: GaussianProcess,
    pub n: usize,
    /// Curves `k_star + 1..=n` carry the drift; 0 means no change.
    pub k_star: usize,
    pub drift: Drift,
    pub d: usize,
    pub alpha: f64,
    pub reps: usize,
    pub gen_grid: usize,
    pub work_grid: usize,
    pub preprocess: Preprocess,
    pub seed: u64,
}

impl SimConfig {
    /// `N = 100`, `d = 3`, `α = 0.05`, 1000-point generation grid, 201-point
    /// working grid, default smoothing.
    pub fn new(process: GaussianProcess, drift: Drift, k_star: usize, reps: usize, seed: u64) -> Self {
        Self {
            process,
            n: 100,
            k_star,
            drift,
            d: 3,
            alpha: 0.05,
            reps,
            gen_grid: 1000,
            work_grid: 201,
            preprocess: Preprocess::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.n < 3 {
            return Err(Error::InsufficientSample { n: self.n, needed: 3 });
        }
        if self.k_star >= self.n {
            return Err(invalid(format!("k_star {} must be below N = {}", self.k_star, self.n)));
        }
        if self.d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha {} is not in (0, 1)", self.alpha)));
        }
        if self.gen_grid < 2 || self.work_grid < 2 {
            return Err(invalid("grids need at least 2 points"));
        }
        Ok(())
    }
}

/// Statistics of one replication, one entry per requested mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub statistics: Vec<f64>,
    pub theta_hat: Vec<f64>,
}

struct Pipeline {
    gen_grid: QuadratureGrid<f64>,
    work_grid: Arc<QuadratureGrid<f64>>,
    /// Right factor taking generation-grid rows to working-grid rows.
    map: Option<DMatrix<f64>>,
    provenance: Provenance,
}

impl Pipeline {
    fn new(config: &SimConfig) -> Result<Self> {
        let gen_grid = QuadratureGrid::new(config.gen_grid, QuadratureRule::Trapezoid)?;
        let (work_grid, map, provenance) = match config.preprocess {
            Preprocess::Raw => (Arc::new(gen_grid.clone()), None, Provenance::Simulated),
            Preprocess::Resample => {
                let work = Arc::new(QuadratureGrid::new(config.work_grid, QuadratureRule::Trapezoid)?);
                let map = linear_interpolation_map(gen_grid.points(), work.points())?;
                (work, Some(map.transpose()), Provenance::Resampled)
            }
            Preprocess::Smooth { basis } => {
                let work = Arc::new(QuadratureGrid::new(config.work_grid, QuadratureRule::Trapezoid)?);
                let size = BSplineBasis::<f64>::default_size(config.gen_grid, basis);
                let spline = BSplineBasis::cubic(size)?;
                let smoother = Smoother::new(gen_grid.points(), &spline, Arc::clone(&work))?;
                let map = smoother.apply_matrix(&DMatrix::identity(config.gen_grid, config.gen_grid))?;
                (
                    work,
                    Some(map),
                    Provenance::Smoothed {
                        basis_size: size,
                        degree: 3,
                    },
                )
            }
        };
        Ok(Self {
            gen_grid,
            work_grid,
            map,
            provenance,
        })
    }

    fn sample(&self, config: &SimConfig, rep: usize) -> Result<CurveSet<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rep as u64);
        let g = self.gen_grid.len();
        let mut raw = DMatrix::<f64>::zeros(config.n, g);
        for i in 0..config.n {
            let path = config.process.sample(&self.gen_grid, &mut rng);
            raw.row_mut(i).copy_from_slice(&path);
        }
        add_drift_rows(&mut raw, self.gen_grid.points(), config.drift, config.k_star);
        let values = match &self.map {
            Some(map) => raw * map,
            None => raw,
        };
        CurveSet::new(values, Arc::clone(&self.work_grid), self.provenance.clone())
    }
}

/// Runs every replication of `config`, evaluating each mode on the same
/// simulated sample. Output is in replication order and does not depend on
/// the number of worker threads.
pub fn replicate(config: &SimConfig, modes: &[Mode]) -> Result<Vec<Replication>> {
    config.validate()?;
    if modes.is_empty() {
        return Err(invalid("at least one mode is required"));
    }
    let pipeline = Pipeline::new(config)?;
    (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let curves = pipeline.sample(config, rep)?;
            let basis = PooledBasis::new(&curves)?;
            let mut statistics = Vec::with_capacity(modes.len());
            let mut theta_hat = Vec::with_capacity(modes.len());
            for &mode in modes {
                let process = rank_one_process(&basis, &ProcessOptions::new(config.d, mode))?;
                statistics.push(h_statistic(&process));
                theta_hat.push(estimate_change_point(&process));
            }
            Ok(Replication {
                statistics,
                theta_hat,
            })
        })
        .collect()
}

/// One line of a power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub process: String,
    pub n: usize,
    pub k_star: usize,
    pub drift: String,
    pub d: usize,
    pub alpha: f64,
    pub mode: Mode,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
    pub std_error: f64,
    pub critical_value: f64,
    pub preprocess: String,
    pub seed: u64,
}

/// Rejection rates of each mode under `config`, with binomial standard errors.
pub fn power_study(config: &SimConfig, modes: &[Mode], table: &CriticalValueTable) -> Result<Vec<PowerRow>> {
    config.validate()?;
    let critical = table.critical_value(config.d, config.alpha)?;
    let reps = replicate(config, modes)?;
    Ok(modes
        .iter()
        .enumerate()
        .map(|(m, &mode)| {
            let rejections = reps.iter().filter(|r| r.statistics[m] > critical).count();
            let power = rejections as f64 / config.reps as f64;
            PowerRow {
                process: config.process.name().to_string(),
                n: config.n,
                k_star: config.k_star,
                drift: config.drift.name().to_string(),
                d: config.d,
                alpha: config.alpha,
                mode,
                reps: config.reps,
                rejections,
                power,
                std_error: (power * (1.0 - power) / config.reps as f64).sqrt(),
                critical_value: critical,
                preprocess: config.preprocess.to_string(),
                seed: config.seed,
            }
        })
        .collect())
}

/// Change indices of the `N = 100`, `d = 3` power comparison.
pub const COMPARISON_K_STARS: [usize; 10] = [0, 15, 20, 25, 35, 50, 65, 75, 80, 85];

/// The three scenarios of the `N = 100` comparison, each at every change
/// index: BM with drift `t`, BM with `sin t`, BB with `0.8 t (1 - t)`. Uses
/// 750 spline basis functions on the 1000-point generation grid.
pub fn comparison_configs(reps: usize, seed: u64) -> Vec<SimConfig> {
    let scenarios = [
        (GaussianProcess::BrownianMotion, Drift::Linear),
        (GaussianProcess::BrownianMotion, Drift::Sin),
        (GaussianProcess::BrownianBridge, Drift::Quadratic),
    ];
    let mut out = Vec::new();
    for (process, drift) in scenarios {
        for k in COMPARISON_K_STARS {
            let mut c = SimConfig::new(process, drift, k, reps, seed);
            c.preprocess = Preprocess::Smooth { basis: Some(750) };
            out.push(c);
        }
    }
    out
}

/// Writes power rows as CSV with a header.
pub fn write_power_csv<W: std::io::Write>(rows: &[PowerRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
