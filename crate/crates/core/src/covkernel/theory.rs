use super::kernel::{KernelEstimate, Split};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Bias attenuation factor of the split estimator at fraction `u` when the
/// mean changes at fraction `theta`:
/// `(max(u,θ) - min(u,θ)) / (max(u,θ) (1 - min(u,θ)))`.
pub fn f_theta<T: Scalar>(u: T, theta: T) -> Result<T> {
    if !(u > T::zero() && u <= T::one()) {
        return Err(invalid(format!("u must lie in (0, 1], got {u:?}")));
    }
    if !(theta > T::zero() && theta < T::one()) {
        return Err(invalid(format!("theta must lie in (0, 1), got {theta:?}")));
    }
    let hi = u.max(theta);
    let lo = u.min(theta);
    Ok((hi - lo) / (hi * (T::one() - lo)))
}

/// Mean change `Δ = μ₁ - μ₂` occurring at fraction `theta`.
#[derive(Debug, Clone)]
pub struct DriftSpec<T> {
    delta: Vec<T>,
    theta: T,
}

impl<T: Scalar> DriftSpec<T> {
    pub fn new(delta: Vec<T>, theta: T) -> Result<Self> {
        if !(theta > T::zero() && theta < T::one()) {
            return Err(invalid(format!("theta must lie in (0, 1), got {theta:?}")));
        }
        Ok(Self { delta, theta })
    }

    pub fn delta(&self) -> &[T] {
        &self.delta
    }

    pub fn theta(&self) -> T {
        self.theta
    }
}

/// Probability limit of the split estimator at fraction `u`:
/// `c + θ(1-θ) f_θ(u) Δ⊗Δ`.
pub fn target_kernel<T: Scalar>(
    base: &KernelEstimate<T>,
    drift: &DriftSpec<T>,
    u: T,
) -> Result<KernelEstimate<T>> {
    let m = base.grid().len();
    if drift.delta.len() != m {
        return Err(invalid(format!(
            "drift has {} values but the kernel grid has {m} points",
            drift.delta.len()
        )));
    }
    let theta = drift.theta;
    let coef = theta * (T::one() - theta) * f_theta(u, theta)?;
    let mut values = base.values().clone();
    for b in 0..m {
        for a in 0..m {
            values[(a, b)] += coef * drift.delta[a] * drift.delta[b];
        }
    }
    KernelEstimate::from_matrix(values, base.grid().clone(), Split::Analytic, base.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdobj::{QuadratureGrid, QuadratureRule};
    use std::sync::Arc;

    #[test]
    fn f_theta_examples() {
        assert_eq!(f_theta(0.5, 0.5).unwrap(), 0.0);
        for theta in [0.1, 0.5, 0.9] {
            assert!((f_theta::<f64>(1.0, theta).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((f_theta::<f64>(0.25, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f_theta_domain() {
        assert!(f_theta(0.0, 0.5).is_err());
        assert!(f_theta(1.1, 0.5).is_err());
        assert!(f_theta(0.5, 0.0).is_err());
        assert!(f_theta(0.5, 1.0).is_err());
        assert!(f_theta(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn f_theta_range_and_continuity() {
        for theta in [0.05, 0.3, 0.5, 0.77] {
            let mut prev = f_theta(0.001, theta).unwrap();
            for i in 2..=1000 {
                let u = i as f64 / 1000.0;
                let v = f_theta(u, theta).unwrap();
                assert!((0.0..=1.0).contains(&v));
                assert!((v - prev).abs() < 0.05, "jump at u={u}");
                prev = v;
            }
        }
    }

    #[test]
    fn target_kernel_cases() {
        let grid = Arc::new(QuadratureGrid::<f64>::new(21, QuadratureRule::Trapezoid).unwrap());
        let base = KernelEstimate::brownian_motion(grid.clone());
        let delta = grid.sample(|t| t);
        let drift = DriftSpec::new(delta.clone(), 0.5).unwrap();

        let at_theta = target_kernel(&base, &drift, 0.5).unwrap();
        assert!((at_theta.values() - base.values()).amax() < 1e-15);

        let at_one = target_kernel(&base, &drift, 1.0).unwrap();
        for a in 0..21 {
            for b in 0..21 {
                let expected = base.values()[(a, b)] + 0.25 * delta[a] * delta[b];
                assert!((at_one.values()[(a, b)] - expected).abs() < 1e-15);
            }
        }

        let flat = DriftSpec::new(vec![0.0; 21], 0.3).unwrap();
        for u in [0.1, 0.3, 0.6, 1.0] {
            let k = target_kernel(&base, &flat, u).unwrap();
            assert!((k.values() - base.values()).amax() == 0.0);
        }

        let short = DriftSpec::new(vec![0.0; 5], 0.3).unwrap();
        assert!(target_kernel(&base, &short, 0.5).is_err());
        assert!(DriftSpec::new(vec![0.0], 1.0).is_err());
    }
}
