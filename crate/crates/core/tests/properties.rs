use std::sync::Arc;

use fdchange::covkernel::{kernel_sweep, pooled_kernel, split_kernel, KernelEstimate};
use fdchange::cptest::{estimate_change_point, h_statistic, r_process_with, Engine, Mode, ProcessOptions};
use fdchange::fdobj::{CurveSet, Provenance, QuadratureGrid, QuadratureRule};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sample(n: usize, m: usize, seed: u64, rule: QuadratureRule) -> CurveSet<f64> {
    let grid = Arc::new(QuadratureGrid::new(m, rule).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    CurveSet::new(values, grid, Provenance::Raw).unwrap()
}

fn rule(midpoint: bool) -> QuadratureRule {
    if midpoint {
        QuadratureRule::Midpoint
    } else {
        QuadratureRule::Trapezoid
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn min_weighted_eigenvalue(k: &KernelEstimate<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(k.weighted_form()).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_kernels_symmetric_psd(n in 3usize..16, m in 3usize..12, seed: u64, mid: bool) {
        let cs = sample(n, m, seed, rule(mid));
        for k in kernel_sweep(&cs).unwrap() {
            prop_assert!(k.asymmetry() <= 1e-10);
            let (lo, hi) = min_weighted_eigenvalue(&k);
            prop_assert!(lo >= -1e-8 * hi.max(0.0), "min eigenvalue {lo} vs max {hi}");
        }
    }

    #[test]
    fn pooled_dominates_split(n in 3usize..16, m in 3usize..10, seed: u64) {
        let cs = sample(n, m, seed, QuadratureRule::Trapezoid);
        let pooled = pooled_kernel(&cs).unwrap();
        for k in 1..n {
            let split = split_kernel(&cs, k).unwrap();
            let diff = KernelEstimate::from_matrix(
                pooled.values() - split.values(),
                pooled.grid().clone(),
                pooled.split(),
                n,
            ).unwrap();
            let (lo, _) = min_weighted_eigenvalue(&diff);
            let (_, top) = min_weighted_eigenvalue(&pooled);
            prop_assert!(lo >= -1e-10 * top, "k={k}: {lo}");
        }
    }

    #[test]
    fn kernels_ignore_common_shift(n in 3usize..12, m in 3usize..10, seed: u64, level in -50.0f64..50.0) {
        let cs = sample(n, m, seed, QuadratureRule::Trapezoid);
        let g: Vec<f64> = cs.grid().points().iter().map(|t| level * (1.0 + t * t)).collect();
        let shifted = cs.with_values(DMatrix::from_fn(n, m, |i, j| cs.values()[(i, j)] + g[j])).unwrap();
        let scale = max_abs(pooled_kernel(&cs).unwrap().values()).max(1.0);
        let tol = 1e-10 * scale * (1.0 + level.abs()).powi(2);
        prop_assert!(max_abs(&(pooled_kernel(&cs).unwrap().values() - pooled_kernel(&shifted).unwrap().values())) <= tol);
        for k in 1..n {
            let d = split_kernel(&cs, k).unwrap().values() - split_kernel(&shifted, k).unwrap().values();
            prop_assert!(max_abs(&d) <= tol);
        }
    }

    #[test]
    fn kernels_scale_quadratically(n in 3usize..12, m in 3usize..10, seed: u64, c in 0.01f64..100.0) {
        let cs = sample(n, m, seed, QuadratureRule::Trapezoid);
        let scaled = cs.with_values(cs.values() * c).unwrap();
        for k in 1..n {
            let a = split_kernel(&cs, k).unwrap().values() * (c * c);
            let b = split_kernel(&scaled, k).unwrap().values().clone();
            prop_assert!(max_abs(&(a - &b)) <= 1e-10 * max_abs(&b).max(1e-300));
        }
    }

    #[test]
    fn sweep_matches_direct(n in 2usize..20, m in 2usize..10, seed: u64) {
        let cs = sample(n, m, seed, QuadratureRule::Trapezoid);
        let swept = kernel_sweep(&cs).unwrap();
        prop_assert_eq!(swept.len(), n - 1);
        for (k, kern) in swept.iter().enumerate() {
            let direct = split_kernel(&cs, k + 1).unwrap();
            prop_assert!(max_abs(&(kern.values() - direct.values())) <= 1e-10);
        }
    }

    #[test]
    fn process_location_and_scale_invariant(
        n in 6usize..25, m in 4usize..12, seed: u64, d in 1usize..4, level in -20.0f64..20.0, c in 0.05f64..20.0,
        h_mode: bool,
    ) {
        let mode = if h_mode { Mode::H } else { Mode::S };
        let cs = sample(n, m, seed, QuadratureRule::Trapezoid);
        let g: Vec<f64> = cs.grid().points().iter().map(|t| level * (t - 0.3).sin()).collect();
        let moved = cs.with_values(DMatrix::from_fn(n, m, |i, j| c * cs.values()[(i, j)] + g[j])).unwrap();
        let opts = ProcessOptions::new(d, mode);
        let a = r_process_with(&cs, &opts).unwrap();
        let b = r_process_with(&moved, &opts).unwrap();
        let top = a.values().iter().cloned().fold(0.0, f64::max);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-8 * top, "{x} vs {y}");
        }
        prop_assert!(rel_close(h_statistic(&a), h_statistic(&b), 1e-8));
    }

    #[test]
    fn engines_agree(n in 4usize..20, m in 3usize..12, seed: u64, d in 1usize..5, h_mode: bool) {
        let mode = if h_mode { Mode::H } else { Mode::S };
        let cs = sample(n, m, seed, QuadratureRule::Trapezoid);
        let a = r_process_with(&cs, &ProcessOptions::new(d, mode)).unwrap();
        let b = r_process_with(&cs, &ProcessOptions::new(d, mode).engine(Engine::Direct)).unwrap();
        let top = b.values().iter().cloned().fold(0.0, f64::max);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-8 * top, "{x} vs {y}");
        }
        prop_assert_eq!(a.local_dims(), b.local_dims());
    }

    #[test]
    fn reversal_mirrors_change_estimate(seed: u64, k_star in 8usize..32) {
        let n = 40;
        let m = 15;
        let base = sample(n, m, seed, QuadratureRule::Trapezoid);
        let shifted = base
            .with_values(DMatrix::from_fn(n, m, |i, j| {
                base.values()[(i, j)] * 0.3 + if i >= k_star { 4.0 } else { 0.0 }
            }))
            .unwrap();
        let opts = ProcessOptions::new(2, Mode::H);
        let fwd = estimate_change_point(&r_process_with(&shifted, &opts).unwrap());
        let bwd = estimate_change_point(&r_process_with(&shifted.reversed(), &opts).unwrap());
        prop_assert!((fwd + bwd - 1.0).abs() <= 2.0 / n as f64, "{fwd} + {bwd}");
    }
}

#[test]
fn f32_and_f64_agree() {
    let cs = sample(20, 9, 3, QuadratureRule::Trapezoid);
    let grid32 = Arc::new(QuadratureGrid::<f32>::new(9, QuadratureRule::Trapezoid).unwrap());
    let cs32 = CurveSet::new(cs.values().map(|v| v as f32), grid32, Provenance::Raw).unwrap();
    let a = h_statistic(&r_process_with(&cs, &ProcessOptions::new(2, Mode::H)).unwrap());
    let b = h_statistic(&r_process_with(&cs32, &ProcessOptions::new(2, Mode::H)).unwrap());
    assert!(((a - b as f64) / a).abs() < 1e-3, "{a} vs {b}");
}
