use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fdobj::{CurveSet, Provenance, QuadratureGrid};
use crate::scalar::Scalar;

/// Standard Brownian motion at the grid points.
///
/// Built from independent Gaussian increments whose variances are the
/// spacings; the path starts at `W(0) = 0`, so a grid point at 0 gets 0.
pub fn simulate_bm<T, R>(grid: &QuadratureGrid<T>, rng: &mut R) -> Vec<T>
where
    T: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    bm_path(grid.points(), rng)
}

fn bm_path<T, R>(points: &[T], rng: &mut R) -> Vec<T>
where
    T: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let mut out = Vec::with_capacity(points.len());
    let mut w = T::zero();
    let mut prev = T::zero();
    for &t in points {
        let dt = t - prev;
        if dt > T::zero() {
            let z: T = StandardNormal.sample(rng);
            w += z * dt.sqrt();
        }
        out.push(w);
        prev = t;
    }
    out
}

/// Standard Brownian bridge `B(t) = W(t) - t W(1)` at the grid points.
pub fn simulate_bb<T, R>(grid: &QuadratureGrid<T>, rng: &mut R) -> Vec<T>
where
    T: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let mut w = bm_path(grid.points(), rng);
    let last = *grid.points().last().expect("grid has points");
    let w_last = *w.last().expect("grid has points");
    let w_one = if last < T::one() {
        let z: T = StandardNormal.sample(rng);
        w_last + z * (T::one() - last).sqrt()
    } else {
        w_last
    };
    for (v, &t) in w.iter_mut().zip(grid.points()) {
        *v -= t * w_one;
    }
    w
}

/// Gaussian process used to generate null curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianProcess {
    BrownianMotion,
    BrownianBridge,
}

impl GaussianProcess {
    pub fn sample<T, R>(self, grid: &QuadratureGrid<T>, rng: &mut R) -> Vec<T>
    where
        T: Scalar,
        R: Rng + ?Sized,
        StandardNormal: Distribution<T>,
    {
        match self {
            GaussianProcess::BrownianMotion => simulate_bm(grid, rng),
            GaussianProcess::BrownianBridge => simulate_bb(grid, rng),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GaussianProcess::BrownianMotion => "bm",
            GaussianProcess::BrownianBridge => "bb",
        }
    }
}

impl std::str::FromStr for GaussianProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm" | "brownian_motion" | "brownian-motion" => Ok(Self::BrownianMotion),
            "bb" | "brownian_bridge" | "brownian-bridge" => Ok(Self::BrownianBridge),
            other => Err(invalid(format!("unknown process `{other}` (expected bm or bb)"))),
        }
    }
}

/// Mean shift added after the change point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    /// `t`
    Linear,
    /// `sin t`
    Sin,
    /// `0.8 t (1 - t)`
    Quadratic,
    /// `t²`
    Square,
    /// `√t`
    Sqrt,
    /// `exp t`
    Exp,
    /// `cos t`
    Cos,
    /// `1`
    Constant,
}

impl Drift {
    pub const ALL: [Drift; 8] = [
        Drift::Linear,
        Drift::Sin,
        Drift::Quadratic,
        Drift::Square,
        Drift::Sqrt,
        Drift::Exp,
        Drift::Cos,
        Drift::Constant,
    ];

    pub fn eval<T: Scalar>(self, t: T) -> T {
        match self {
            Drift::Linear => t,
            Drift::Sin => t.sin(),
            Drift::Quadratic => T::of(0.8) * t * (T::one() - t),
            Drift::Square => t * t,
            Drift::Sqrt => t.sqrt(),
            Drift::Exp => t.exp(),
            Drift::Cos => t.cos(),
            Drift::Constant => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Drift::Linear => "t",
            Drift::Sin => "sin",
            Drift::Quadratic => "0.8t(1-t)",
            Drift::Square => "t^2",
            Drift::Sqrt => "sqrt",
            Drift::Exp => "exp",
            Drift::Cos => "cos",
            Drift::Constant => "const",
        }
    }

    /// Comma-separated list of accepted names.
    pub fn menu() -> String {
        Self::ALL.iter().map(|d| d.name()).collect::<Vec<_>>().join(", ")
    }
}

impl std::fmt::Display for Drift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Drift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(' ', "");
        let drift = match key.as_str() {
            "t" | "linear" => Drift::Linear,
            "sin" | "sin(t)" | "sint" => Drift::Sin,
            "0.8t(1-t)" | "quadratic" | "bridge" => Drift::Quadratic,
            "t^2" | "t2" | "square" => Drift::Square,
            "sqrt" | "sqrt(t)" => Drift::Sqrt,
            "exp" | "exp(t)" => Drift::Exp,
            "cos" | "cos(t)" => Drift::Cos,
            "const" | "constant" | "1" => Drift::Constant,
            _ => {
                return Err(invalid(format!(
                    "unknown drift `{s}`; available: {}",
                    Drift::menu()
                )))
            }
        };
        Ok(drift)
    }
}

/// Adds `drift(t)` to rows `k_star..` of a curve matrix.
pub(crate) fn add_drift_rows<T: Scalar>(values: &mut DMatrix<T>, points: &[T], drift: Drift, k_star: usize) {
    add_scaled_drift_rows(values, points, drift, T::one(), k_star);
}

fn add_scaled_drift_rows<T: Scalar>(values: &mut DMatrix<T>, points: &[T], drift: Drift, scale: T, k_star: usize) {
    let shift: Vec<T> = points.iter().map(|&t| scale * drift.eval(t)).collect();
    for i in k_star..values.nrows() {
        for (j, &s) in shift.iter().enumerate() {
            values[(i, j)] += s;
        }
    }
}

/// Curves with (one-based) index above `k_star` get `drift` added.
/// `k_star = N` leaves the sample unchanged; `k_star = 0` shifts every curve.
pub fn apply_drift<T: Scalar>(curves: &CurveSet<T>, drift: Drift, k_star: usize) -> Result<CurveSet<T>> {
    apply_scaled_drift(curves, drift, T::one(), k_star)
}

/// [`apply_drift`] with the drift multiplied by `scale`.
pub fn apply_scaled_drift<T: Scalar>(curves: &CurveSet<T>, drift: Drift, scale: T, k_star: usize) -> Result<CurveSet<T>> {
    if k_star > curves.n() {
        return Err(invalid(format!("k_star {k_star} exceeds N = {}", curves.n())));
    }
    let mut values = curves.values().clone();
    add_scaled_drift_rows(&mut values, curves.grid().points(), drift, scale, k_star);
    curves.with_values(values)
}

/// `n` independent paths of `process` on `grid`, reproducible from `seed`.
pub fn simulate_curves<T>(process: GaussianProcess, grid: Arc<QuadratureGrid<T>>, n: usize, seed: u64) -> Result<CurveSet<T>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(n, grid.len());
    for i in 0..n {
        let path = process.sample(&grid, &mut rng);
        values.row_mut(i).copy_from_slice(&path);
    }
    CurveSet::new(values, grid, Provenance::Simulated)
}
