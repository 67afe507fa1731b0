//! Grids, curve storage, B-spline smoothing and L² inner products.

mod bspline;
mod curves;
mod grid;

pub use bspline::{smooth_to_basis, BSplineBasis, Smoother};
pub use curves::{same_grid, CurveSet, Provenance, RawCurves};
pub(crate) use curves::linear_interpolation_map;
pub use grid::{inner_product, l2_norm, QuadratureGrid, QuadratureRule};
