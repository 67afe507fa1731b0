use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::downdate::{downdate_top, Mode as Eigenmode, PooledBasis};
use crate::covkernel::{bias_correct, bias_factor, BoundaryRule, KernelEstimate, KernelSweep};
use crate::error::{invalid, Error, Result};
use crate::fdobj::{same_grid, CurveSet};
use crate::scalar::Scalar;
use crate::spectral::{eigendecompose, EigenSystem, EIGEN_FLOOR};

/// Which covariance estimator normalizes the CUSUM process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Split-sample kernel at every `u = k/N` (statistic `H_{N,d}`).
    H,
    /// Pooled kernel throughout (statistic `S_{N,d}`).
    S,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::H => "H",
            Mode::S => "S",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" | "h" => Ok(Mode::H),
            "S" | "s" => Ok(Mode::S),
            other => Err(invalid(format!("unknown mode `{other}` (expected H or S)"))),
        }
    }
}

/// How the per-split eigenpairs are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Rank-one downdates of the pooled eigendecomposition.
    #[default]
    RankOne,
    /// Dense kernel per split from the sweep, then a full eigendecomposition
    /// and explicit scores. Slow; kept as the reference path.
    Direct,
}

/// Options for [`r_process_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOptions {
    pub d: usize,
    pub mode: Mode,
    pub engine: Engine,
    /// Multiply split kernels by `(1 - 2/N)^{-1}`; only honoured in H-mode.
    pub bias_correction: bool,
    pub boundary: BoundaryRule,
}

impl ProcessOptions {
    pub fn new(d: usize, mode: Mode) -> Self {
        Self {
            d,
            mode,
            engine: Engine::default(),
            bias_correction: true,
            boundary: BoundaryRule::default(),
        }
    }

    pub fn engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    pub fn boundary(mut self, rule: BoundaryRule) -> Self {
        self.boundary = rule;
        self
    }

    fn corrected(&self) -> bool {
        self.mode == Mode::H && self.bias_correction
    }
}

/// `R_N(k/N)` for `k = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumProcess<T> {
    values: Vec<T>,
    d: usize,
    mode: Mode,
    local_dims: Vec<usize>,
}

impl<T: Scalar> CusumProcess<T> {
    pub fn from_values(values: Vec<T>, d: usize, mode: Mode) -> Self {
        let local_dims = vec![d; values.len()];
        Self {
            values,
            d,
            mode,
            local_dims,
        }
    }

    /// `values()[k - 1]` is `R_N(k/N)`.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of eigenmodes that entered `R_N(k/N)`, per `k`. Lower than `d`
    /// where eigenvalues fell below the floor.
    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    /// Splits at which fewer than `d` modes were usable.
    pub fn reduced_splits(&self) -> Vec<usize> {
        self.local_dims
            .iter()
            .enumerate()
            .filter(|(_, &l)| l < self.d)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Projections `⟨X_i, v_l⟩` of every curve on every eigenfunction (`N x d`).
pub fn scores<T: Scalar>(curves: &CurveSet<T>, system: &EigenSystem<T>) -> Result<DMatrix<T>> {
    if !same_grid(curves.grid(), system.grid()) {
        return Err(invalid("curves and eigenfunctions live on different grids"));
    }
    let w = curves.grid().weights();
    let weighted = DMatrix::from_fn(system.d(), curves.m(), |l, j| system.eigenfunctions()[(l, j)] * w[j]);
    Ok(curves.values() * weighted.transpose())
}

/// CUSUM process with default options for `mode`.
pub fn r_process<T: Scalar>(curves: &CurveSet<T>, d: usize, mode: Mode) -> Result<CusumProcess<T>> {
    r_process_with(curves, &ProcessOptions::new(d, mode))
}

pub fn r_process_with<T: Scalar>(curves: &CurveSet<T>, opts: &ProcessOptions) -> Result<CusumProcess<T>> {
    let n = curves.n();
    if n < 3 {
        return Err(Error::InsufficientSample { n, needed: 3 });
    }
    if opts.d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    match opts.engine {
        Engine::RankOne => {
            let basis = PooledBasis::new(curves)?;
            rank_one_process(&basis, opts)
        }
        Engine::Direct => direct_process(curves, opts),
    }
}

fn degenerate(k: usize) -> Error {
    Error::DegenerateData(format!("covariance kernel at split {k} has no usable eigenvalue"))
}

/// `(1/N) Σ_l cusum_l² / λ_l` over modes above `floor`.
fn accumulate<T: Scalar>(modes: &[Eigenmode<T>], floor: T, scale: T, n: T) -> (T, usize) {
    let mut r = T::zero();
    let mut used = 0;
    for m in modes {
        let lam = m.eigenvalue * scale;
        if lam > floor {
            r += m.projection_sq / lam;
            used += 1;
        }
    }
    (r / n, used)
}

pub(crate) fn rank_one_process<T: Scalar>(basis: &PooledBasis<T>, opts: &ProcessOptions) -> Result<CusumProcess<T>> {
    let n = basis.n();
    let nn = T::of_usize(n);
    let r = basis.rank();
    let scale = if opts.corrected() { bias_factor(n) } else { T::one() };
    let totals = basis.coords.row_sum();

    let mut values = Vec::with_capacity(n);
    let mut local_dims = Vec::with_capacity(n);
    let mut head = vec![T::zero(); r];
    let mut q = vec![T::zero(); r];
    let mut modes = Vec::with_capacity(opts.d);
    for k in 1..=n {
        for (j, h) in head.iter_mut().enumerate() {
            *h += basis.coords[(k - 1, j)];
        }
        if k == n {
            let floor = T::of(EIGEN_FLOOR) * basis.trace;
            let used = basis.eigenvalues.iter().take(opts.d).filter(|&&v| v > floor).count();
            values.push(T::zero());
            local_dims.push(used);
            continue;
        }
        let u = T::of_usize(k) / nn;
        let mut q_norm_sq = T::zero();
        for j in 0..r {
            q[j] = head[j] - u * totals[j];
            q_norm_sq += q[j] * q[j];
        }
        let split = opts.mode == Mode::H && !opts.boundary.uses_pooled(k, n);
        let rho = if split {
            T::one() / (T::of_usize(k) * T::of_usize(n - k))
        } else {
            T::zero()
        };
        let trace = scale * (basis.trace - rho * q_norm_sq);
        let floor = T::of(EIGEN_FLOOR) * trace.max(T::zero());
        downdate_top(&basis.eigenvalues, &q, rho, opts.d, &mut modes);
        if modes.first().is_none_or(|m| !(m.eigenvalue * scale > floor)) {
            return Err(degenerate(k));
        }
        let (rk, used) = accumulate(&modes, floor, scale, nn);
        values.push(rk);
        local_dims.push(used);
    }
    Ok(CusumProcess {
        values,
        d: opts.d,
        mode: opts.mode,
        local_dims,
    })
}

fn direct_process<T: Scalar>(curves: &CurveSet<T>, opts: &ProcessOptions) -> Result<CusumProcess<T>> {
    PooledBasis::new(curves)?;
    let n = curves.n();
    let nn = T::of_usize(n);
    let sweep = KernelSweep::with_rule(curves, opts.boundary)?;
    let prepare = |kernel: KernelEstimate<T>| -> Result<EigenSystem<T>> {
        let kernel = if opts.corrected() { bias_correct(&kernel)? } else { kernel };
        eigendecompose(&kernel, opts.d.min(curves.m())).map_err(|e| match e {
            Error::DegenerateKernel => degenerate(kernel.n()),
            other => other,
        })
    };
    let pooled_system = prepare(sweep.pooled())?;

    let per_split = |k: usize| -> Result<(T, usize)> {
        if k == n {
            return Ok((T::zero(), pooled_system.significant()));
        }
        let owned;
        let system = if opts.mode == Mode::S || opts.boundary.uses_pooled(k, n) {
            &pooled_system
        } else {
            owned = prepare(sweep.kernel_at(k)?).map_err(|e| match e {
                Error::DegenerateData(_) => degenerate(k),
                other => other,
            })?;
            &owned
        };
        let eta = scores(curves, system)?;
        let u = T::of_usize(k) / nn;
        let mut r = T::zero();
        let mut used = 0;
        for l in 0..system.d() {
            let lam = system.eigenvalues()[l];
            if !(lam > system.floor()) {
                continue;
            }
            let col = eta.column(l);
            let head = col.rows(0, k).sum();
            let cusum = head - u * col.sum();
            r += cusum * cusum / lam;
            used += 1;
        }
        Ok((r / nn, used))
    };
    let results: Vec<Result<(T, usize)>> = (1..=n).into_par_iter().map(per_split).collect();
    let mut values = Vec::with_capacity(n);
    let mut local_dims = Vec::with_capacity(n);
    for item in results {
        let (v, used) = item?;
        values.push(v);
        local_dims.push(used);
    }
    Ok(CusumProcess {
        values,
        d: opts.d,
        mode: opts.mode,
        local_dims,
    })
}

/// Integrated CUSUM statistic: the mean of `R_N(k/N)` over `k = 1..=N`.
pub fn h_statistic<T: Scalar>(process: &CusumProcess<T>) -> T {
    let n = process.values.len();
    if n == 0 {
        return T::zero();
    }
    process.values.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(n)
}

/// Smallest `k/N` at which `R_N` attains its maximum.
pub fn estimate_change_point<T: Scalar>(process: &CusumProcess<T>) -> T {
    let k = argmax_first(&process.values);
    T::of_usize(k + 1) / T::of_usize(process.values.len().max(1))
}

/// Zero-based index of the first maximum.
pub(crate) fn argmax_first<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
