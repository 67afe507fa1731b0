//! Split-kernel eigenpairs as rank-one downdates of the pooled kernel.
//!
//! With `S_k` the sum of the first `k` curves centred at the grand mean,
//! `ĉ_{k/N} = ĉ_1 - S_k S_k' / (N k (N - k))`, so in the pooled eigenbasis every
//! split kernel is `diag(λ) - ρ q q'` for the CUSUM vector `q` of the scores.
//! Its leading eigenvalues are roots of the secular equation
//! `1 = ρ Σ q_j² / (λ_j - x)`, and the squared projection of `q` on the
//! matching unit eigenvector is `1 / (ρ² Σ q_j² / (λ_j - x)²)`. Those two
//! numbers are all the CUSUM statistic needs.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fdobj::CurveSet;
use crate::scalar::Scalar;

/// Relative size below which pooled eigenvalues are discarded as numerical
/// noise from the null space of the centred sample.
const BASIS_CUTOFF: f64 = 1e-13;

/// Eigen-coordinates of a sample under its pooled covariance kernel.
#[derive(Debug, Clone)]
pub(crate) struct PooledBasis<T: Scalar> {
    /// Positive eigenvalues of the pooled kernel, largest first.
    pub eigenvalues: Vec<T>,
    /// `coords[(i, j)]`: score of centred curve `i` on eigenfunction `j`.
    pub coords: DMatrix<T>,
    /// Quadrature trace of the pooled kernel.
    pub trace: T,
}

impl<T: Scalar> PooledBasis<T> {
    pub fn new(curves: &CurveSet<T>) -> Result<Self> {
        let n = curves.n();
        let m = curves.m();
        let nn = T::of_usize(n);
        let mean = nalgebra::RowDVector::from_vec(curves.mean_curve());
        let sqrt_w: Vec<T> = curves.grid().weights().iter().map(|w| w.sqrt()).collect();
        // rows: centred curves scaled by sqrt(w), so plain dot products are
        // quadrature inner products
        let mut z = curves.values().clone();
        for mut row in z.row_iter_mut() {
            row -= &mean;
            for (v, &s) in row.iter_mut().zip(&sqrt_w) {
                *v *= s;
            }
        }
        let trace = z.iter().fold(T::zero(), |a, &v| a + v * v) / nn;
        let energy = curves
            .values()
            .row_iter()
            .map(|row| row.iter().zip(&sqrt_w).fold(T::zero(), |a, (&v, &s)| a + v * v * s * s))
            .fold(T::zero(), |a, v| a + v)
            / nn;
        // centring identical curves leaves only rounding noise
        let noise = T::of(64.0) * <T as Scalar>::epsilon();
        if !(trace > noise * noise * energy) {
            return Err(Error::DegenerateData("all curves are identical".into()));
        }

        let (values, coords) = if n <= m {
            // dual: Gram matrix of the centred curves
            let gram = &z * z.transpose() / nn;
            let eig = SymmetricEigen::new(gram);
            let order = descending(&eig.eigenvalues);
            let vals: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let coords = DMatrix::from_fn(n, order.len(), |i, c| {
                let lam = vals[c].max(T::zero());
                (nn * lam).sqrt() * eig.eigenvectors[(i, order[c])]
            });
            (vals, coords)
        } else {
            let cov = z.transpose() * &z / nn;
            let eig = SymmetricEigen::new(cov);
            let order = descending(&eig.eigenvalues);
            let vals: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vecs = DMatrix::from_fn(m, order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
            (vals, &z * vecs)
        };
        let cutoff = T::of(BASIS_CUTOFF) * trace;
        let r = values.iter().take_while(|&&v| v > cutoff).count();
        Ok(Self {
            eigenvalues: values[..r].to_vec(),
            coords: coords.columns(0, r).into_owned(),
            trace,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn descending<T: Scalar>(values: &nalgebra::DVector<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// One eigenpair of a downdated kernel, reduced to what the statistic uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Mode<T> {
    pub eigenvalue: T,
    /// Squared inner product of the CUSUM vector with the unit eigenvector.
    pub projection_sq: T,
}

/// Leading `d` eigenpairs of `diag(lambda) - rho q q'`, largest first.
///
/// `lambda` must be sorted in decreasing order and the matrix must be
/// positive semidefinite (true for any split kernel).
pub(crate) fn downdate_top<T: Scalar>(lambda: &[T], q: &[T], rho: T, d: usize, out: &mut Vec<Mode<T>>) {
    out.clear();
    let eps = <T as Scalar>::epsilon();
    let q_norm_sq = q.iter().fold(T::zero(), |a, &v| a + v * v);
    if rho == T::zero() || q_norm_sq == T::zero() || lambda.is_empty() {
        out.extend(lambda.iter().zip(q).take(d).map(|(&l, &v)| Mode {
            eigenvalue: l,
            projection_sq: v * v,
        }));
        return;
    }

    // Deflation: tiny components keep their pole as an eigenvalue, and
    // repeated poles collapse into one with the combined weight.
    let z_tol = T::of(8.0) * eps * q_norm_sq.sqrt();
    let lam_tol = T::of(8.0) * eps * lambda[0].abs();
    let mut deflated: Vec<Mode<T>> = Vec::new();
    let mut poles: Vec<T> = Vec::with_capacity(lambda.len());
    let mut weights: Vec<T> = Vec::with_capacity(lambda.len());
    for (&l, &v) in lambda.iter().zip(q) {
        if v.abs() <= z_tol {
            if deflated.len() < d {
                deflated.push(Mode {
                    eigenvalue: l,
                    projection_sq: v * v,
                });
            }
            continue;
        }
        if let (Some(&last), Some(w)) = (poles.last(), weights.last_mut()) {
            if last - l <= lam_tol {
                *w += v * v;
                if deflated.len() < d {
                    deflated.push(Mode {
                        eigenvalue: l,
                        projection_sq: T::zero(),
                    });
                }
                continue;
            }
        }
        poles.push(l);
        weights.push(v * v);
    }

    let mut roots: Vec<Mode<T>> = Vec::with_capacity(d);
    let weight_sum = weights.iter().fold(T::zero(), |a, &w| a + w);
    let mut diffs = vec![T::zero(); poles.len()];
    for l in 0..poles.len().min(d) {
        let hi = poles[l];
        let lo = if l + 1 < poles.len() {
            poles[l + 1]
        } else {
            hi - rho * weight_sum
        };
        roots.push(secular_root(&poles, &weights, rho, l, lo, hi, &mut diffs));
    }

    // merge the two descending lists
    let (mut a, mut b) = (0, 0);
    deflated.sort_by(|x, y| y.eigenvalue.partial_cmp(&x.eigenvalue).unwrap_or(std::cmp::Ordering::Equal));
    while out.len() < d && (a < roots.len() || b < deflated.len()) {
        let take_root = match (roots.get(a), deflated.get(b)) {
            (Some(r), Some(f)) => r.eigenvalue >= f.eigenvalue,
            (Some(_), None) => true,
            _ => false,
        };
        if take_root {
            out.push(roots[a]);
            a += 1;
        } else {
            out.push(deflated[b]);
            b += 1;
        }
    }
}

/// Root of `1 - rho Σ w_j / (p_j - x)` in `(lo, hi)` where `hi = poles[l]`.
fn secular_root<T: Scalar>(
    poles: &[T],
    weights: &[T],
    rho: T,
    l: usize,
    lo: T,
    hi: T,
    diffs: &mut [T],
) -> Mode<T> {
    let half = T::of(0.5);
    let secular = |diffs: &[T], tau: T| {
        let mut s = T::zero();
        for (&dj, &wj) in diffs.iter().zip(weights) {
            s += wj / (dj - tau);
        }
        T::one() - rho * s
    };

    // shift the origin to the pole nearer the root so that `p_j - x` is
    // computed without cancellation
    let mid = (lo + hi) * half;
    for (dj, &p) in diffs.iter_mut().zip(poles) {
        *dj = p - hi;
    }
    let upper_half = secular(diffs, mid - hi) >= T::zero();
    let origin = if upper_half || l + 1 >= poles.len() {
        hi
    } else {
        poles[l + 1]
    };
    for (dj, &p) in diffs.iter_mut().zip(poles) {
        *dj = p - origin;
    }
    let (mut a, mut b) = if upper_half {
        (mid - origin, hi - origin)
    } else {
        (lo - origin, mid - origin)
    };
    // invariant: secular(a) >= 0 > secular(b)
    for _ in 0..256 {
        let c = (a + b) * half;
        if c <= a || c >= b {
            break;
        }
        if secular(diffs, c) >= T::zero() {
            a = c;
        } else {
            b = c;
        }
    }
    let tau = (a + b) * half;
    let mut slope = T::zero();
    for (&dj, &wj) in diffs.iter().zip(weights) {
        let r = dj - tau;
        slope += wj / (r * r);
    }
    let projection_sq = if slope.is_finite() && slope > T::zero() {
        T::one() / (rho * rho * slope)
    } else {
        T::zero()
    };
    Mode {
        eigenvalue: origin + tau,
        projection_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense oracle: full eigendecomposition of diag(lambda) - rho q q'.
    fn dense(lambda: &[f64], q: &[f64], rho: f64) -> Vec<(f64, f64)> {
        let n = lambda.len();
        let qv = DVector::from_column_slice(q);
        let mut a = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
        a.ger(-rho, &qv, &qv, 1.0);
        let eig = SymmetricEigen::new(a);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let p = eig.eigenvectors.column(i).dot(&qv);
                (eig.eigenvalues[i], p * p)
            })
            .collect();
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        pairs
    }

    fn check(lambda: &[f64], q: &[f64], rho: f64, d: usize) {
        let mut out = Vec::new();
        downdate_top(lambda, q, rho, d, &mut out);
        let oracle = dense(lambda, q, rho);
        let scale = lambda[0];
        let qn: f64 = q.iter().map(|v| v * v).sum();
        assert_eq!(out.len(), d.min(lambda.len()));
        for (got, want) in out.iter().zip(&oracle) {
            assert!((got.eigenvalue - want.0).abs() < 1e-12 * scale, "{got:?} vs {want:?}");
            // projections of eigenvectors inside a degenerate eigenspace are
            // not unique; only compare where the eigenvalue is isolated
            let isolated = oracle
                .iter()
                .filter(|o| (o.0 - want.0).abs() < 1e-9 * scale)
                .count()
                == 1;
            if isolated {
                assert!((got.projection_sq - want.1).abs() < 1e-9 * qn, "{got:?} vs {want:?}");
            }
        }
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let mut lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
        lambda.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // largest rho keeping the matrix PSD is 1 / Σ q²/λ
        let limit: f64 = 1.0 / q.iter().zip(&lambda).map(|(v, l)| v * v / l).sum::<f64>();
        let rho = limit * rng.random_range(0.0..1.0);
        (lambda, q, rho)
    }

    #[test]
    fn agrees_with_dense_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [1, 2, 3, 5, 20, 60] {
            for _ in 0..20 {
                let (lambda, q, rho) = random_problem(&mut rng, n);
                check(&lambda, &q, rho, 3.min(n));
                check(&lambda, &q, rho, n);
            }
        }
    }

    #[test]
    fn zero_rho_is_identity() {
        let lambda = [3.0, 2.0, 1.0];
        let q = [0.5, -1.0, 2.0];
        let mut out = Vec::new();
        downdate_top(&lambda, &q, 0.0, 2, &mut out);
        assert_eq!(out[0], Mode { eigenvalue: 3.0, projection_sq: 0.25 });
        assert_eq!(out[1], Mode { eigenvalue: 2.0, projection_sq: 1.0 });
    }

    #[test]
    fn deflation_of_zero_components_and_repeated_poles() {
        check(&[3.0, 2.0, 1.0, 0.5], &[0.0, 0.7, 0.0, 0.2], 0.4, 4);
        check(&[2.0, 2.0, 2.0, 1.0], &[0.3, 0.4, 0.5, 0.1], 0.5, 4);
        check(&[2.0, 2.0, 1.0, 1.0], &[0.3, 0.0, 0.5, 0.5], 0.5, 3);
    }

    #[test]
    fn singular_downdate() {
        // rho at the PSD limit: the smallest eigenvalue becomes zero
        let lambda = [4.0, 1.0];
        let q = [1.0, 1.0];
        let rho = 1.0 / (1.0 / 4.0 + 1.0);
        check(&lambda, &q, rho, 2);
    }
}
