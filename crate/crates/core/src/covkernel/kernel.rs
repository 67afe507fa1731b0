use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fdobj::{same_grid, CurveSet, QuadratureGrid};
use crate::scalar::Scalar;

/// Which estimator produced a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Centred at the grand mean.
    Pooled,
    /// Each of the segments `..k` and `k..` centred at its own mean.
    At(usize),
    /// Built from a closed-form covariance function.
    Analytic,
}

/// What to do at the extreme splits `k = 1` and `k = N - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Fall back to the pooled estimator, whose segment of one curve would
    /// otherwise carry no variance information.
    #[default]
    Pooled,
    /// Use the split estimator everywhere; a one-curve segment contributes
    /// no deviation terms.
    Split,
}

impl BoundaryRule {
    pub(crate) fn uses_pooled(self, k: usize, n: usize) -> bool {
        self == BoundaryRule::Pooled && (k == 1 || k + 1 == n)
    }
}

/// Dense covariance kernel on `grid x grid`.
#[derive(Debug, Clone)]
pub struct KernelEstimate<T: Scalar> {
    values: DMatrix<T>,
    grid: Arc<QuadratureGrid<T>>,
    split: Split,
    bias_corrected: bool,
    n: usize,
}

impl<T: Scalar> KernelEstimate<T> {
    pub fn from_matrix(
        values: DMatrix<T>,
        grid: Arc<QuadratureGrid<T>>,
        split: Split,
        n: usize,
    ) -> Result<Self> {
        let m = grid.len();
        if values.nrows() != m || values.ncols() != m {
            return Err(invalid(format!(
                "kernel is {}x{} but the grid has {m} points",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self {
            values,
            grid,
            split,
            bias_corrected: false,
            n,
        })
    }

    /// Discretizes a covariance function `c(t, s)`.
    pub fn from_fn(grid: Arc<QuadratureGrid<T>>, c: impl Fn(T, T) -> T) -> Self {
        let p = grid.points();
        let values = DMatrix::from_fn(p.len(), p.len(), |a, b| c(p[a], p[b]));
        Self {
            values,
            grid,
            split: Split::Analytic,
            bias_corrected: false,
            n: 0,
        }
    }

    /// `min(t, s)`: covariance of standard Brownian motion.
    pub fn brownian_motion(grid: Arc<QuadratureGrid<T>>) -> Self {
        Self::from_fn(grid, |t, s| t.min(s))
    }

    /// `min(t, s) - t s`: covariance of the standard Brownian bridge.
    pub fn brownian_bridge(grid: Arc<QuadratureGrid<T>>) -> Self {
        Self::from_fn(grid, |t, s| t.min(s) - t * s)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid<T>> {
        &self.grid
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn is_bias_corrected(&self) -> bool {
        self.bias_corrected
    }

    /// Sample size the estimate was computed from (0 for analytic kernels).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Every value multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: &self.values * factor,
            ..self.clone()
        }
    }

    /// Quadrature approximation of the trace integral of `c(t, t)`.
    pub fn trace(&self) -> T {
        self.grid
            .weights()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, &w)| acc + w * self.values[(j, j)])
    }

    /// Double quadrature integral of `(self - other)^2`.
    pub fn squared_distance(&self, other: &Self) -> Result<T> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(invalid("kernels live on different grids"));
        }
        Ok(squared_l2(&(&self.values - &other.values), self.grid.weights()))
    }

    /// Double quadrature integral of the squared kernel.
    pub fn squared_norm(&self) -> T {
        squared_l2(&self.values, self.grid.weights())
    }

    /// `W^{1/2} C W^{1/2}`: the symmetric matrix whose eigenpairs map to the
    /// integral operator's eigenpairs.
    pub fn weighted_form(&self) -> DMatrix<T> {
        let sw = DVector::from_iterator(
            self.grid.len(),
            self.grid.weights().iter().map(|w| w.sqrt()),
        );
        let m = self.grid.len();
        DMatrix::from_fn(m, m, |a, b| sw[a] * self.values[(a, b)] * sw[b])
    }

    /// Largest absolute asymmetry `|c(t,s) - c(s,t)|`.
    pub fn asymmetry(&self) -> T {
        (&self.values - self.values.transpose()).amax()
    }

    pub(crate) fn set_bias_corrected(mut self, flag: bool) -> Self {
        self.bias_corrected = flag;
        self
    }
}

fn squared_l2<T: Scalar>(values: &DMatrix<T>, w: &[T]) -> T {
    let m = w.len();
    let mut acc = T::zero();
    for b in 0..m {
        for a in 0..m {
            let v = values[(a, b)];
            acc += w[a] * w[b] * v * v;
        }
    }
    acc
}

fn require_sample<T: Scalar>(curves: &CurveSet<T>) -> Result<usize> {
    let n = curves.n();
    if n < 2 {
        return Err(Error::InsufficientSample { n, needed: 2 });
    }
    Ok(n)
}

fn check_split(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidSplit { k, n });
    }
    Ok(())
}

/// Head and tail means around a split.
#[derive(Debug, Clone)]
pub struct SegmentMeans<T: Scalar> {
    pub head_mean: Vec<T>,
    pub tail_mean: Vec<T>,
    pub k: usize,
    pub n: usize,
    pub grid: Arc<QuadratureGrid<T>>,
}

impl<T: Scalar> SegmentMeans<T> {
    /// Head minus tail mean.
    pub fn difference(&self) -> Vec<T> {
        self.head_mean
            .iter()
            .zip(&self.tail_mean)
            .map(|(&a, &b)| a - b)
            .collect()
    }
}

/// Means of curves `1..=k` and `k+1..=N` (one-based, as in the estimator).
pub fn segment_means<T: Scalar>(curves: &CurveSet<T>, k: usize) -> Result<SegmentMeans<T>> {
    let n = curves.n();
    check_split(k, n)?;
    let v = curves.values();
    let head = v.rows(0, k).row_sum() / T::of_usize(k);
    let tail = v.rows(k, n - k).row_sum() / T::of_usize(n - k);
    Ok(SegmentMeans {
        head_mean: head.iter().copied().collect(),
        tail_mean: tail.iter().copied().collect(),
        k,
        n,
        grid: Arc::clone(curves.grid()),
    })
}

/// Sum of outer products of the rows of `block` after subtracting `center`.
fn centered_cross<T: Scalar>(block: nalgebra::DMatrixView<'_, T>, center: &[T]) -> DMatrix<T> {
    let c = nalgebra::RowDVector::from_row_slice(center);
    let mut centred = block.into_owned();
    for mut row in centred.row_iter_mut() {
        row -= &c;
    }
    centred.transpose() * centred
}

/// Covariance kernel centred at the grand mean, divided by `N`.
pub fn pooled_kernel<T: Scalar>(curves: &CurveSet<T>) -> Result<KernelEstimate<T>> {
    let n = require_sample(curves)?;
    let mean = curves.mean_curve();
    let cross = centered_cross(curves.values().rows(0, n), &mean);
    KernelEstimate::from_matrix(
        cross / T::of_usize(n),
        Arc::clone(curves.grid()),
        Split::Pooled,
        n,
    )
}

/// Split estimator at `k` under the default boundary rule.
pub fn split_kernel<T: Scalar>(curves: &CurveSet<T>, k: usize) -> Result<KernelEstimate<T>> {
    split_kernel_with(curves, k, BoundaryRule::Pooled)
}

/// Split estimator: each segment centred at its own mean, the two cross
/// products summed and divided by `N`.
pub fn split_kernel_with<T: Scalar>(
    curves: &CurveSet<T>,
    k: usize,
    rule: BoundaryRule,
) -> Result<KernelEstimate<T>> {
    let n = require_sample(curves)?;
    check_split(k, n)?;
    if rule.uses_pooled(k, n) {
        return pooled_kernel(curves);
    }
    let means = segment_means(curves, k)?;
    let v = curves.values();
    let cross = centered_cross(v.rows(0, k), &means.head_mean)
        + centered_cross(v.rows(k, n - k), &means.tail_mean);
    KernelEstimate::from_matrix(
        cross / T::of_usize(n),
        Arc::clone(curves.grid()),
        Split::At(k),
        n,
    )
}

/// Multiplies by `(1 - 2/n)^{-1}`, removing the null-hypothesis bias of the
/// split estimator.
pub fn bias_correct<T: Scalar>(kernel: &KernelEstimate<T>) -> Result<KernelEstimate<T>> {
    let n = kernel.n();
    if n <= 2 {
        return Err(Error::DegenerateCorrection { n });
    }
    Ok(kernel
        .scaled(bias_factor(n))
        .set_bias_corrected(true))
}

/// `(1 - 2/n)^{-1}`.
pub fn bias_factor<T: Scalar>(n: usize) -> T {
    let nn = T::of_usize(n);
    nn / (nn - T::of(2.0))
}
