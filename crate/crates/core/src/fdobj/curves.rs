use std::sync::Arc;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use super::grid::{QuadratureGrid, QuadratureRule};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Curves observed on a shared set of abscissae, before any quadrature is
/// attached. Row `i` holds curve `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCurves<T> {
    values: DMatrix<T>,
    abscissae: Vec<T>,
}

impl<T: Scalar> RawCurves<T> {
    pub fn new(values: DMatrix<T>, abscissae: Vec<T>) -> Result<Self> {
        if values.ncols() != abscissae.len() {
            return Err(invalid(format!(
                "{} columns but {} abscissae",
                values.ncols(),
                abscissae.len()
            )));
        }
        if values.nrows() < 2 {
            return Err(Error::InsufficientSample {
                n: values.nrows(),
                needed: 2,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(invalid(format!("non-finite value at row {r}, column {c}")));
        }
        Ok(Self { values, abscissae })
    }

    /// Builds from row vectors; every row must have `abscissae.len()` entries.
    pub fn from_rows(rows: &[Vec<T>], abscissae: Vec<T>) -> Result<Self> {
        let m = abscissae.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(invalid(format!("row {i} has {} values, expected {m}", r.len())));
        }
        let values = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(values, abscissae)
    }

    /// Equispaced abscissae `j / (m - 1)` on [0, 1].
    pub fn equispaced(values: DMatrix<T>) -> Result<Self> {
        let m = values.ncols();
        if m < 2 {
            return Err(invalid("need at least two sampling points per curve"));
        }
        let step = T::one() / T::of_usize(m - 1);
        let abscissae = (0..m).map(|j| T::of_usize(j) * step).collect();
        Self::new(values, abscissae)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn abscissae(&self) -> &[T] {
        &self.abscissae
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }
}

/// How a [`CurveSet`] was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Smoothed { basis_size: usize, degree: usize },
    Resampled,
    Simulated,
}

/// `N` curves evaluated on a common quadrature grid.
#[derive(Debug, Clone)]
pub struct CurveSet<T: Scalar> {
    values: DMatrix<T>,
    grid: Arc<QuadratureGrid<T>>,
    provenance: Provenance,
}

impl<T: Scalar> CurveSet<T> {
    pub fn new(values: DMatrix<T>, grid: Arc<QuadratureGrid<T>>, provenance: Provenance) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(invalid(format!(
                "{} columns but the grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("curve values must be finite"));
        }
        Ok(Self {
            values,
            grid,
            provenance,
        })
    }

    /// Uses the raw sampling abscissae directly as the quadrature nodes.
    pub fn from_raw(raw: &RawCurves<T>, rule: QuadratureRule) -> Result<Self> {
        let grid = QuadratureGrid::from_points(raw.abscissae().to_vec(), rule)?;
        Self::new(raw.values().clone(), Arc::new(grid), Provenance::Raw)
    }

    /// Piecewise-linear interpolation of the raw curves onto `grid`.
    /// Values outside the sampled range are held constant.
    pub fn resample_linear(raw: &RawCurves<T>, grid: Arc<QuadratureGrid<T>>) -> Result<Self> {
        let map = linear_interpolation_map(raw.abscissae(), grid.points())?;
        let values = raw.values() * map.transpose();
        Self::new(values, grid, Provenance::Resampled)
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid<T>> {
        &self.grid
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of grid points.
    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn curve(&self, i: usize) -> RowDVector<T> {
        self.values.row(i).into_owned()
    }

    pub fn curve_vec(&self, i: usize) -> Vec<T> {
        self.values.row(i).iter().copied().collect()
    }

    /// Curves `start..end`, sharing this set's grid.
    pub fn segment(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(invalid(format!(
                "segment {start}..{end} outside 0..{}",
                self.n()
            )));
        }
        Ok(Self {
            values: self.values.rows(start, end - start).into_owned(),
            grid: Arc::clone(&self.grid),
            provenance: self.provenance.clone(),
        })
    }

    /// Same curves in reverse chronological order.
    pub fn reversed(&self) -> Self {
        let n = self.n();
        let values = DMatrix::from_fn(n, self.m(), |i, j| self.values[(n - 1 - i, j)]);
        Self {
            values,
            grid: Arc::clone(&self.grid),
            provenance: self.provenance.clone(),
        }
    }

    /// Replaces the values, keeping grid and provenance.
    pub fn with_values(&self, values: DMatrix<T>) -> Result<Self> {
        Self::new(values, Arc::clone(&self.grid), self.provenance.clone())
    }

    /// Pointwise mean of all curves.
    pub fn mean_curve(&self) -> Vec<T> {
        let n = T::of_usize(self.n());
        self.values
            .row_sum()
            .iter()
            .map(|&v| v / n)
            .collect()
    }
}

/// True when two grids are the same object or equal point for point.
pub fn same_grid<T: Scalar>(a: &Arc<QuadratureGrid<T>>, b: &Arc<QuadratureGrid<T>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Sparse linear-interpolation operator as a dense `targets x sources` matrix.
pub(crate) fn linear_interpolation_map<T: Scalar>(sources: &[T], targets: &[T]) -> Result<DMatrix<T>> {
    if sources.len() < 2 || sources.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("interpolation abscissae must be strictly increasing"));
    }
    let last = sources.len() - 1;
    let mut map = DMatrix::zeros(targets.len(), sources.len());
    for (r, &x) in targets.iter().enumerate() {
        if x <= sources[0] {
            map[(r, 0)] = T::one();
        } else if x >= sources[last] {
            map[(r, last)] = T::one();
        } else {
            let j = sources.partition_point(|&s| s <= x) - 1;
            let frac = (x - sources[j]) / (sources[j + 1] - sources[j]);
            map[(r, j)] = T::one() - frac;
            map[(r, j + 1)] = frac;
        }
    }
    Ok(map)
}
