use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::kernel::{BoundaryRule, KernelEstimate, Split};
use crate::error::{Error, Result};
use crate::fdobj::{CurveSet, QuadratureGrid};
use crate::scalar::Scalar;

/// Split kernels for every `k = 1..N-1` from one pass over the data.
///
/// The curves are centred at the grand mean once. With `S_k` the running sum
/// of the first `k` centred curves the split estimator is
/// `pooled - S_k S_k' / (k (N - k))`, so each step costs one outer product
/// and no error is carried from one `k` to the next.
#[derive(Debug, Clone)]
pub struct KernelSweep<T: Scalar> {
    centred: DMatrix<T>,
    pooled: DMatrix<T>,
    grid: Arc<QuadratureGrid<T>>,
    rule: BoundaryRule,
    running: DVector<T>,
    next_k: usize,
}

impl<T: Scalar> KernelSweep<T> {
    pub fn new(curves: &CurveSet<T>) -> Result<Self> {
        Self::with_rule(curves, BoundaryRule::Pooled)
    }

    pub fn with_rule(curves: &CurveSet<T>, rule: BoundaryRule) -> Result<Self> {
        let n = curves.n();
        if n < 2 {
            return Err(Error::InsufficientSample { n, needed: 2 });
        }
        let mean = RowDVector::from_vec(curves.mean_curve());
        let mut centred = curves.values().clone();
        for mut row in centred.row_iter_mut() {
            row -= &mean;
        }
        let pooled = centred.transpose() * &centred / T::of_usize(n);
        Ok(Self {
            running: DVector::zeros(curves.m()),
            centred,
            pooled,
            grid: Arc::clone(curves.grid()),
            rule,
            next_k: 1,
        })
    }

    pub fn n(&self) -> usize {
        self.centred.nrows()
    }

    pub fn pooled(&self) -> KernelEstimate<T> {
        KernelEstimate::from_matrix(self.pooled.clone(), Arc::clone(&self.grid), Split::Pooled, self.n())
            .expect("pooled kernel matches its grid")
    }

    /// Kernel at split `k` from an explicit head sum (no iterator state).
    pub fn kernel_at(&self, k: usize) -> Result<KernelEstimate<T>> {
        let n = self.n();
        if k == 0 || k >= n {
            return Err(Error::InvalidSplit { k, n });
        }
        let head = self.centred.rows(0, k).row_sum().transpose();
        Ok(self.assemble(k, &head))
    }

    fn assemble(&self, k: usize, head: &DVector<T>) -> KernelEstimate<T> {
        let n = self.n();
        if self.rule.uses_pooled(k, n) {
            return self.pooled();
        }
        let scale = T::one() / (T::of_usize(k) * T::of_usize(n - k));
        let mut values = self.pooled.clone();
        values.ger(-scale, head, head, T::one());
        KernelEstimate::from_matrix(values, Arc::clone(&self.grid), Split::At(k), n)
            .expect("split kernel matches its grid")
    }
}

impl<T: Scalar> Iterator for KernelSweep<T> {
    type Item = KernelEstimate<T>;

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.n();
        if self.next_k >= n {
            return None;
        }
        let k = self.next_k;
        let row = self.centred.row(k - 1).transpose();
        self.running += row;
        self.next_k += 1;
        Some(self.assemble(k, &self.running))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.n().saturating_sub(self.next_k);
        (left, Some(left))
    }
}

impl<T: Scalar> ExactSizeIterator for KernelSweep<T> {}

/// All split kernels `k = 1..N-1`, in order.
pub fn kernel_sweep<T: Scalar>(curves: &CurveSet<T>) -> Result<Vec<KernelEstimate<T>>> {
    Ok(KernelSweep::new(curves)?.collect())
}
