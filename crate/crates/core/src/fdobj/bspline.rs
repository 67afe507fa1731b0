use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};

use super::curves::{CurveSet, Provenance, RawCurves};
use super::grid::QuadratureGrid;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Clamped B-spline basis on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis<T> {
    degree: usize,
    knots: Vec<T>,
    size: usize,
}

impl<T: Scalar> BSplineBasis<T> {
    /// `size` functions of the given degree with equally spaced interior knots.
    pub fn uniform(size: usize, degree: usize) -> Result<Self> {
        if size < degree + 1 {
            return Err(invalid(format!(
                "basis size {size} is below degree + 1 = {}",
                degree + 1
            )));
        }
        let interior = size - degree - 1;
        let mut knots = vec![T::zero(); degree + 1];
        let spans = T::of_usize(interior + 1);
        knots.extend((1..=interior).map(|j| T::of_usize(j) / spans));
        knots.extend(std::iter::repeat_n(T::one(), degree + 1));
        Ok(Self { degree, knots, size })
    }

    /// Cubic basis with `size` functions.
    pub fn cubic(size: usize) -> Result<Self> {
        Self::uniform(size, 3)
    }

    /// Custom clamped knot vector; must be nondecreasing, start with
    /// `degree + 1` zeros and end with `degree + 1` ones.
    pub fn with_knots(knots: Vec<T>, degree: usize) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) {
            return Err(invalid("knot vector too short for the degree"));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("knots must be nondecreasing"));
        }
        let p = degree + 1;
        let clamped = knots[..p].iter().all(|&k| k == T::zero())
            && knots[knots.len() - p..].iter().all(|&k| k == T::one());
        if !clamped {
            return Err(invalid("knots must be clamped at 0 and 1"));
        }
        let size = knots.len() - p;
        Ok(Self { degree, knots, size })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Basis size used when the caller does not pin one: the raw grid size
    /// minus two, capped by `requested`.
    pub fn default_size(raw_points: usize, requested: Option<usize>) -> usize {
        let cap = raw_points.saturating_sub(2);
        requested.map_or(cap, |r| r.min(cap))
    }

    fn span(&self, x: T) -> usize {
        let n = self.size - 1;
        if x >= self.knots[n + 1] {
            return n;
        }
        if x <= self.knots[self.degree] {
            return self.degree;
        }
        // last index with knots[i] <= x
        self.knots.partition_point(|&k| k <= x) - 1
    }

    /// Nonzero basis values at `x`: returns the index of the first nonzero
    /// function and the `degree + 1` values starting there.
    pub fn evaluate(&self, x: T) -> (usize, Vec<T>) {
        let p = self.degree;
        let i = self.span(x);
        let mut values = vec![T::zero(); p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        values[0] = T::one();
        for j in 1..=p {
            left[j] = x - self.knots[i + 1 - j];
            right[j] = self.knots[i + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (i - p, values)
    }

    /// Dense `points x size` design matrix.
    pub fn design(&self, points: &[T]) -> DMatrix<T> {
        let mut b = DMatrix::zeros(points.len(), self.size);
        for (r, &x) in points.iter().enumerate() {
            let (first, vals) = self.evaluate(x);
            for (j, v) in vals.into_iter().enumerate() {
                b[(r, first + j)] = v;
            }
        }
        b
    }
}

/// Linear operator taking raw observations to the least-squares spline fit
/// evaluated on an output grid. Build once, apply to any number of curves.
#[derive(Debug, Clone)]
pub struct Smoother<T: Scalar> {
    map: DMatrix<T>,
    out_grid: Arc<QuadratureGrid<T>>,
    raw_points: usize,
    basis_size: usize,
    degree: usize,
}

impl<T: Scalar> Smoother<T> {
    pub fn new(abscissae: &[T], basis: &BSplineBasis<T>, out_grid: Arc<QuadratureGrid<T>>) -> Result<Self> {
        let k = basis.size();
        if abscissae.iter().any(|&x| x < T::zero() || x > T::one()) {
            return Err(invalid("raw abscissae must lie in [0, 1]"));
        }
        let mut sorted = abscissae.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite abscissae"));
        sorted.dedup();
        if sorted.len() < k {
            return Err(Error::IllPosedFit(format!(
                "{} distinct abscissae cannot determine {k} basis coefficients",
                sorted.len()
            )));
        }

        // Normal equations, assembled from the local support of each row.
        let p1 = basis.degree() + 1;
        let rows: Vec<(usize, Vec<T>)> = abscissae.iter().map(|&x| basis.evaluate(x)).collect();
        let mut gram = DMatrix::<T>::zeros(k, k);
        for (first, vals) in &rows {
            for a in 0..p1 {
                for b in 0..p1 {
                    gram[(first + a, first + b)] += vals[a] * vals[b];
                }
            }
        }
        let max_diag = (0..k).map(|j| gram[(j, j)]).fold(T::zero(), |m, v| m.max(v));
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::IllPosedFit("spline design is rank deficient (empty basis support)".into())
        })?;
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(T::max_value().unwrap_or(T::one()), |m, &v| m.min(v));
        if min_pivot * min_pivot <= max_diag * T::of_usize(k) * <T as Scalar>::epsilon() {
            return Err(Error::IllPosedFit("spline design is numerically rank deficient".into()));
        }

        // (B'B)^{-1} E'  -> k x m_out
        let eval = basis.design(out_grid.points());
        let solved = chol.solve(&eval.transpose());
        // map = E (B'B)^{-1} B' -> m_out x n_raw, using the sparsity of B
        let mut map = DMatrix::<T>::zeros(out_grid.len(), abscissae.len());
        for (r, (first, vals)) in rows.iter().enumerate() {
            for (a, &v) in vals.iter().enumerate() {
                let coef_row = solved.row(first + a);
                for o in 0..out_grid.len() {
                    map[(o, r)] += coef_row[o] * v;
                }
            }
        }
        Ok(Self {
            map,
            out_grid,
            raw_points: abscissae.len(),
            basis_size: k,
            degree: basis.degree(),
        })
    }

    /// Fitted values on the output grid, one row per input row.
    pub fn apply_matrix(&self, values: &DMatrix<T>) -> Result<DMatrix<T>> {
        if values.ncols() != self.raw_points {
            return Err(invalid(format!(
                "smoother built for {} raw points, got {}",
                self.raw_points,
                values.ncols()
            )));
        }
        Ok(values * self.map.transpose())
    }

    pub fn apply(&self, raw: &RawCurves<T>) -> Result<CurveSet<T>> {
        let values = self.apply_matrix(raw.values())?;
        CurveSet::new(
            values,
            Arc::clone(&self.out_grid),
            Provenance::Smoothed {
                basis_size: self.basis_size,
                degree: self.degree,
            },
        )
    }

    pub fn out_grid(&self) -> &Arc<QuadratureGrid<T>> {
        &self.out_grid
    }
}

/// Least-squares B-spline fit of every raw curve, evaluated on `out_grid`.
pub fn smooth_to_basis<T: Scalar>(
    raw: &RawCurves<T>,
    basis: &BSplineBasis<T>,
    out_grid: Arc<QuadratureGrid<T>>,
) -> Result<CurveSet<T>> {
    Smoother::new(raw.abscissae(), basis, out_grid)?.apply(raw)
}
