//! Eigendecomposition of discretized kernels in the quadrature metric.
//!
//! A kernel sampled on a grid with weights `w` acts on curves as
//! `(C f)(t_a) = Σ_b c(t_a, t_b) w_b f(t_b)`. That matrix is not symmetric,
//! so the eigenproblem is solved for `B = W^{1/2} C W^{1/2}` and the
//! eigenvectors mapped back by `W^{-1/2}`. The resulting eigenfunctions are
//! orthonormal under the quadrature inner product.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::covkernel::{KernelEstimate, Split};
use crate::error::{invalid, Error, Result};
use crate::fdobj::{inner_product, QuadratureGrid};
use crate::scalar::Scalar;

/// Relative eigenvalue floor: modes below `EIGEN_FLOOR * trace` count as zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Leading eigenpairs of a kernel.
#[derive(Debug, Clone)]
pub struct EigenSystem<T: Scalar> {
    eigenvalues: Vec<T>,
    /// Row `l` is the `l`-th eigenfunction on the grid.
    eigenfunctions: DMatrix<T>,
    grid: Arc<QuadratureGrid<T>>,
    split: Split,
    explained_fraction: T,
    floor: T,
}

impl<T: Scalar> EigenSystem<T> {
    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<T> {
        &self.eigenfunctions
    }

    pub fn eigenfunction(&self, l: usize) -> Vec<T> {
        self.eigenfunctions.row(l).iter().copied().collect()
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid<T>> {
        &self.grid
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Share of the positive spectrum carried by the retained eigenvalues.
    pub fn explained_fraction(&self) -> T {
        self.explained_fraction
    }

    /// Absolute eigenvalue floor used for this system.
    pub fn floor(&self) -> T {
        self.floor
    }

    /// Number of retained eigenvalues above the floor.
    pub fn significant(&self) -> usize {
        self.eigenvalues.iter().take_while(|&&v| v > self.floor).count()
    }

    fn flip(&mut self, l: usize) {
        let mut row = self.eigenfunctions.row_mut(l);
        row.neg_mut();
    }
}

fn sorted_eigen<T: Scalar>(kernel: &KernelEstimate<T>) -> (Vec<T>, DMatrix<T>) {
    let b = kernel.weighted_form();
    let sym = (&b + b.transpose()) * T::of(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// All positive eigenvalues of the kernel's integral operator, largest first.
pub fn full_spectrum<T: Scalar>(kernel: &KernelEstimate<T>) -> Vec<T> {
    let (values, _) = sorted_eigen(kernel);
    let floor = T::of(EIGEN_FLOOR) * kernel.trace().max(T::zero());
    values.into_iter().filter(|&v| v > floor).collect()
}

/// First `d` eigenpairs of `∫ c(t, s) v(s) ds = λ v(t)`.
///
/// Eigenvalues are clipped at zero and eigenfunctions are sign-aligned with
/// [`align_sign`] (no reference).
pub fn eigendecompose<T: Scalar>(kernel: &KernelEstimate<T>, d: usize) -> Result<EigenSystem<T>> {
    let m = kernel.grid().len();
    if d == 0 || d > m {
        return Err(invalid(format!("need 1 <= d <= {m}, got d = {d}")));
    }
    let trace = kernel.trace();
    let floor = T::of(EIGEN_FLOOR) * trace.max(T::zero());
    let (values, vectors) = sorted_eigen(kernel);
    if !(trace > T::zero()) || !(values[0] > floor) {
        return Err(Error::DegenerateKernel);
    }
    let positive_total = values
        .iter()
        .filter(|&&v| v > floor)
        .fold(T::zero(), |a, &v| a + v);
    let grid = Arc::clone(kernel.grid());
    let inv_sqrt_w: Vec<T> = grid.weights().iter().map(|w| T::one() / w.sqrt()).collect();
    let mut functions = DMatrix::zeros(d, m);
    for l in 0..d {
        for a in 0..m {
            functions[(l, a)] = vectors[(a, l)] * inv_sqrt_w[a];
        }
        let row: Vec<T> = functions.row(l).iter().copied().collect();
        let norm = inner_product(&row, &row, &grid)?.sqrt();
        if norm > T::zero() {
            functions.row_mut(l).scale_mut(T::one() / norm);
        }
    }
    let eigenvalues: Vec<T> = values[..d].iter().map(|&v| v.max(T::zero())).collect();
    let retained = eigenvalues
        .iter()
        .filter(|&&v| v > floor)
        .fold(T::zero(), |a, &v| a + v);
    let system = EigenSystem {
        eigenvalues,
        eigenfunctions: functions,
        grid,
        split: kernel.split(),
        explained_fraction: retained / positive_total,
        floor,
    };
    Ok(align_sign(system, None))
}

/// Fixes the sign of every eigenfunction.
///
/// With a reference, eigenfunction `l` is flipped when its inner product with
/// the reference's `l`-th eigenfunction is negative. Otherwise (and for
/// indices past the reference's dimension) the quadrature integral of the
/// eigenfunction is made nonnegative, with the first nonzero grid value
/// deciding when the integral vanishes.
pub fn align_sign<T: Scalar>(mut system: EigenSystem<T>, reference: Option<&EigenSystem<T>>) -> EigenSystem<T> {
    let grid = Arc::clone(&system.grid);
    for l in 0..system.d() {
        let f = system.eigenfunction(l);
        let flip = match reference {
            Some(r) if l < r.d() && r.eigenfunctions.ncols() == f.len() => {
                let g = r.eigenfunction(l);
                inner_product(&f, &g, &grid).map(|v| v < T::zero()).unwrap_or(false)
            }
            _ => integral_sign_is_negative(&f, &grid),
        };
        if flip {
            system.flip(l);
        }
    }
    system
}

fn integral_sign_is_negative<T: Scalar>(f: &[T], grid: &QuadratureGrid<T>) -> bool {
    let integral = grid.integrate(f).unwrap_or(T::zero());
    let scale = f
        .iter()
        .zip(grid.weights())
        .fold(T::zero(), |a, (&v, &w)| a + v.abs() * w);
    let tie = integral.abs() <= T::of(64.0) * <T as Scalar>::epsilon() * scale;
    if !tie {
        return integral < T::zero();
    }
    f.iter()
        .find(|v| **v != T::zero())
        .is_some_and(|&v| v < T::zero())
}

/// Smallest `d` whose leading eigenvalues carry at least `fraction` of the
/// positive spectrum.
pub fn select_d<T: Scalar>(eigenvalues: &[T], fraction: T) -> Result<usize> {
    if !(fraction > T::zero() && fraction < T::one()) {
        return Err(invalid(format!("fraction must lie in (0, 1), got {fraction:?}")));
    }
    let mut positive: Vec<T> = eigenvalues.iter().copied().filter(|&v| v > T::zero()).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateKernel);
    }
    positive.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let total = positive.iter().fold(T::zero(), |a, &v| a + v);
    let mut cum = T::zero();
    for (i, &v) in positive.iter().enumerate() {
        cum += v;
        if cum >= fraction * total {
            return Ok(i + 1);
        }
    }
    Ok(positive.len())
}

/// Rebuilds `Σ λ_l v_l(t) v_l(s)` from an eigensystem.
pub fn reconstruct<T: Scalar>(system: &EigenSystem<T>) -> DMatrix<T> {
    let m = system.grid.len();
    let mut out = DMatrix::zeros(m, m);
    for l in 0..system.d() {
        let v = system.eigenfunctions.row(l).transpose();
        out.ger(system.eigenvalues[l], &v, &v, T::one());
    }
    out
}
