use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Quadrature rule used to turn integrals over [0, 1] into weighted sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Midpoint,
}

impl std::str::FromStr for QuadratureRule {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trapezoid" | "trap" => Ok(Self::Trapezoid),
            "midpoint" | "mid" => Ok(Self::Midpoint),
            other => Err(invalid(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

/// Abscissae in [0, 1] with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid<T> {
    points: Vec<T>,
    weights: Vec<T>,
    rule: QuadratureRule,
}

impl<T: Scalar> QuadratureGrid<T> {
    /// `m` equispaced points with weights from `rule`.
    ///
    /// Trapezoid puts the points at `j / (m - 1)`; midpoint puts them at the
    /// cell centres `(j + 1/2) / m`.
    pub fn new(m: usize, rule: QuadratureRule) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("quadrature grid needs m >= 2, got {m}")));
        }
        let (points, weights) = match rule {
            QuadratureRule::Trapezoid => {
                let h = T::one() / T::of_usize(m - 1);
                let points = (0..m).map(|j| T::of_usize(j) * h).collect::<Vec<_>>();
                let mut weights = vec![h; m];
                weights[0] = h * T::of(0.5);
                weights[m - 1] = h * T::of(0.5);
                (points, weights)
            }
            QuadratureRule::Midpoint => {
                let h = T::one() / T::of_usize(m);
                let points = (0..m)
                    .map(|j| (T::of_usize(j) + T::of(0.5)) * h)
                    .collect::<Vec<_>>();
                (points, vec![h; m])
            }
        };
        let mut grid = Self { points, weights, rule };
        // force the endpoint back to exactly 1 (rounding in j * h)
        if rule == QuadratureRule::Trapezoid {
            grid.points[m - 1] = T::one();
        }
        Ok(grid)
    }

    /// Quadrature on user-supplied abscissae.
    ///
    /// The trapezoid weights are the half-spacings; midpoint weights are the
    /// widths of the cells bounded by consecutive midpoints and by 0 and 1.
    /// Either way the weights are renormalized to sum to one.
    pub fn from_points(points: Vec<T>, rule: QuadratureRule) -> Result<Self> {
        let m = points.len();
        if m < 2 {
            return Err(invalid(format!("quadrature grid needs m >= 2, got {m}")));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(invalid("grid points must be finite"));
        }
        if points[0] < T::zero() || points[m - 1] > T::one() {
            return Err(invalid("grid points must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid points must be strictly increasing"));
        }
        let half = T::of(0.5);
        let mut weights = vec![T::zero(); m];
        match rule {
            QuadratureRule::Trapezoid => {
                for j in 0..m - 1 {
                    let h = points[j + 1] - points[j];
                    weights[j] += h * half;
                    weights[j + 1] += h * half;
                }
            }
            QuadratureRule::Midpoint => {
                let mut left = T::zero();
                for j in 0..m {
                    let right = if j + 1 < m {
                        (points[j] + points[j + 1]) * half
                    } else {
                        T::one()
                    };
                    weights[j] = right - left;
                    left = right;
                }
            }
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { points, weights, rule })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    /// Quadrature approximation of the integral of `f` over [0, 1].
    pub fn integrate(&self, f: &[T]) -> Result<T> {
        if f.len() != self.len() {
            return Err(invalid(format!(
                "curve has {} values but the grid has {} points",
                f.len(),
                self.len()
            )));
        }
        Ok(f.iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&v, &w)| acc + v * w))
    }

    /// Evaluates `f` at every grid point.
    pub fn sample(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.points.iter().map(|&t| f(t)).collect()
    }
}

/// L² inner product of two curves sampled on `grid`.
pub fn inner_product<T: Scalar>(f: &[T], g: &[T], grid: &QuadratureGrid<T>) -> Result<T> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(invalid(format!(
            "inner product length mismatch: {} and {} values on a {}-point grid",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    Ok(f.iter()
        .zip(g)
        .zip(grid.weights())
        .fold(T::zero(), |acc, ((&a, &b), &w)| acc + a * b * w))
}

/// L² norm of a curve sampled on `grid`.
pub fn l2_norm<T: Scalar>(f: &[T], grid: &QuadratureGrid<T>) -> Result<T> {
    inner_product(f, f, grid).map(|v| v.max(T::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_point_trapezoid() {
        let g = QuadratureGrid::<f64>::new(2, QuadratureRule::Trapezoid).unwrap();
        assert_eq!(g.points(), &[0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn three_point_trapezoid() {
        let g = QuadratureGrid::<f64>::new(3, QuadratureRule::Trapezoid).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn four_point_midpoint() {
        let g = QuadratureGrid::<f64>::new(4, QuadratureRule::Midpoint).unwrap();
        assert!(g.weights().iter().all(|&w| w == 0.25));
        assert_eq!(g.points(), &[0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn rejects_single_point() {
        assert!(matches!(
            QuadratureGrid::<f64>::new(1, QuadratureRule::Trapezoid),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn weights_sum_to_one() {
        for m in [2, 3, 7, 201, 1000] {
            for rule in [QuadratureRule::Trapezoid, QuadratureRule::Midpoint] {
                let g = QuadratureGrid::<f64>::new(m, rule).unwrap();
                let s: f64 = g.weights().iter().sum();
                assert!(close(s, 1.0, 1e-12), "m={m} {rule:?} sum={s}");
            }
        }
    }

    #[test]
    fn irregular_points() {
        let g = QuadratureGrid::from_points(vec![0.0, 0.1, 0.5, 1.0], QuadratureRule::Trapezoid)
            .unwrap();
        assert!(close(g.weights().iter().sum::<f64>(), 1.0, 1e-12));
        // trapezoid integrates linear functions exactly
        let f = g.sample(|t| 3.0 * t + 1.0);
        assert!(close(g.integrate(&f).unwrap(), 2.5, 1e-12));

        let mid = QuadratureGrid::from_points(vec![0.2, 0.4, 0.9], QuadratureRule::Midpoint).unwrap();
        assert!(close(mid.weights()[0], 0.3, 1e-12));
        assert!(close(mid.weights()[2], 0.35, 1e-12));

        assert!(QuadratureGrid::from_points(vec![0.0, 0.0, 1.0], QuadratureRule::Trapezoid).is_err());
        assert!(QuadratureGrid::from_points(vec![0.0, 1.5], QuadratureRule::Trapezoid).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = QuadratureGrid::<f64>::new(101, QuadratureRule::Trapezoid).unwrap();
        let one = vec![1.0; 101];
        assert!(close(inner_product(&one, &one, &g).unwrap(), 1.0, 1e-12));
        let t = g.sample(|t| t);
        assert!(close(inner_product(&one, &t, &g).unwrap(), 0.5, 1e-4));

        let two_pi = 2.0 * std::f64::consts::PI;
        let s = g.sample(|t| (two_pi * t).sin());
        let c = g.sample(|t| (two_pi * t).cos());
        assert!(inner_product(&s, &c, &g).unwrap().abs() < 1e-3);

        assert!(inner_product(&one, &one[..50], &g).is_err());
    }

    #[test]
    fn trapezoid_refinement_is_second_order() {
        // integrand t^3 - t on [0,1]: exact value -1/4
        let err = |m: usize| {
            let g = QuadratureGrid::<f64>::new(m, QuadratureRule::Trapezoid).unwrap();
            let f = g.sample(|t| t * t * t - t);
            let one = vec![1.0; m];
            (inner_product(&f, &one, &g).unwrap() + 0.25).abs()
        };
        let mut prev = err(11);
        for m in [21, 41, 81, 161] {
            let e = err(m);
            let ratio = prev / e;
            assert!((3.5..4.5).contains(&ratio), "m={m} ratio={ratio}");
            prev = e;
        }
    }

    #[test]
    fn f32_grid() {
        let g = QuadratureGrid::<f32>::new(11, QuadratureRule::Trapezoid).unwrap();
        let s: f32 = g.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
