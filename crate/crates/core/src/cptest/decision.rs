use serde::{Deserialize, Serialize};

use super::downdate::PooledBasis;
use super::process::{
    estimate_change_point, h_statistic, r_process_with, rank_one_process, CusumProcess, Engine, Mode, ProcessOptions,
};
use crate::covkernel::BoundaryRule;
use crate::error::{invalid, Result};
use crate::fdobj::CurveSet;
use crate::limitsim::CriticalValueTable;
use crate::scalar::Scalar;
use crate::spectral::select_d;

/// How many eigenfunctions enter the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum DimensionRule {
    Fixed(usize),
    /// Smallest `d` whose pooled eigenvalues explain at least this share.
    ExplainedFraction(f64),
}

/// Settings shared by every test in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub dims: DimensionRule,
    pub alpha: f64,
    pub engine: Engine,
    pub bias_correction: bool,
    pub boundary: BoundaryRule,
}

impl TestConfig {
    pub fn new(dims: DimensionRule, alpha: f64) -> Self {
        Self {
            dims,
            alpha,
            engine: Engine::default(),
            bias_correction: true,
            boundary: BoundaryRule::default(),
        }
    }

    pub fn fixed(d: usize, alpha: f64) -> Self {
        Self::new(DimensionRule::Fixed(d), alpha)
    }

    fn options(&self, d: usize, mode: Mode) -> ProcessOptions {
        ProcessOptions::new(d, mode)
            .engine(self.engine)
            .bias_correction(self.bias_correction)
            .boundary(self.boundary)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha {} is not in (0, 1)", self.alpha)));
        }
        match self.dims {
            DimensionRule::Fixed(0) => Err(invalid("d must be at least 1")),
            DimensionRule::ExplainedFraction(f) if !(f > 0.0 && f < 1.0) => {
                Err(invalid(format!("explained fraction {f} is not in (0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

/// Comparison of a statistic with `K_d(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub critical_value: f64,
    pub p_value: Option<f64>,
    /// `statistic > critical_value`, strictly.
    pub reject: bool,
}

/// Looks up `K_d(α)` and attaches a Monte Carlo p-value when the table
/// retains its draws.
pub fn decide(statistic: f64, d: usize, alpha: f64, table: &CriticalValueTable) -> Result<Decision> {
    let critical_value = table.critical_value(d, alpha)?;
    Ok(Decision {
        critical_value,
        p_value: table.p_value(statistic, d).ok(),
        reject: statistic > critical_value,
    })
}

/// Outcome of one test on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub mode: Mode,
    pub n: usize,
    pub d: usize,
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub p_value: Option<f64>,
    pub reject: bool,
    /// Smallest maximiser of `R_N(k/N)`, reported on acceptance too.
    pub theta_hat: f64,
    /// `N θ̂`: the number of curves before the estimated change.
    pub change_index: usize,
    /// Splits at which fewer than `d` eigenmodes cleared the floor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reduced_splits: Vec<usize>,
}

/// A test result together with the process it came from.
#[derive(Debug, Clone)]
pub struct TestOutcome<T> {
    pub result: TestResult,
    pub process: CusumProcess<T>,
}

fn resolve_d<T: Scalar>(rule: DimensionRule, basis: &PooledBasis<T>) -> Result<usize> {
    match rule {
        DimensionRule::Fixed(d) => Ok(d),
        DimensionRule::ExplainedFraction(f) => select_d(&basis.eigenvalues, T::of(f)),
    }
}

/// Dimension chosen by `rule` for this sample.
pub fn resolve_dimension<T: Scalar>(curves: &CurveSet<T>, rule: DimensionRule) -> Result<usize> {
    resolve_d(rule, &PooledBasis::new(curves)?)
}

/// Runs each mode on the same sample. The pooled eigendecomposition is
/// computed once and shared.
pub fn run_tests<T: Scalar>(
    curves: &CurveSet<T>,
    config: &TestConfig,
    modes: &[Mode],
    table: &CriticalValueTable,
) -> Result<Vec<TestOutcome<T>>> {
    config.validate()?;
    let n = curves.n();
    if n < 3 {
        return Err(crate::Error::InsufficientSample { n, needed: 3 });
    }
    let basis = PooledBasis::new(curves)?;
    let d = resolve_d(config.dims, &basis)?;
    modes
        .iter()
        .map(|&mode| {
            let opts = config.options(d, mode);
            let process = match config.engine {
                Engine::RankOne => rank_one_process(&basis, &opts)?,
                Engine::Direct => r_process_with(curves, &opts)?,
            };
            let statistic = h_statistic(&process).as_f64();
            let theta_hat = estimate_change_point(&process).as_f64();
            let decision = decide(statistic, d, config.alpha, table)?;
            let result = TestResult {
                mode,
                n,
                d,
                statistic,
                critical_value: decision.critical_value,
                alpha: config.alpha,
                p_value: decision.p_value,
                reject: decision.reject,
                theta_hat,
                change_index: super::process::argmax_first(process.values()) + 1,
                reduced_splits: process.reduced_splits(),
            };
            Ok(TestOutcome { result, process })
        })
        .collect()
}

/// End-to-end test of one mode.
pub fn run_test<T: Scalar>(
    curves: &CurveSet<T>,
    config: &TestConfig,
    mode: Mode,
    table: &CriticalValueTable,
) -> Result<TestResult> {
    let mut out = run_tests(curves, config, &[mode], table)?;
    Ok(out.remove(0).result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::fdobj::{Provenance, QuadratureGrid, QuadratureRule};
    use crate::limitsim::limit_quantiles;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn table() -> CriticalValueTable {
        CriticalValueTable::from_entries(vec![(1, 0.05, 0.4614), (2, 0.05, 0.7496), (3, 0.05, 1.0)]).unwrap()
    }

    #[test]
    fn decide_boundaries() {
        let t = table();
        assert!(!decide(0.0, 1, 0.05, &t).unwrap().reject);
        assert!(!decide(0.4614, 1, 0.05, &t).unwrap().reject);
        assert!(decide(0.7, 1, 0.05, &t).unwrap().reject);
        assert!(matches!(decide(0.7, 4, 0.05, &t), Err(Error::TableMiss { d: 4, .. })));
    }

    #[test]
    fn decide_attaches_p_values_from_draws() {
        let t = limit_quantiles(1, &[0.05], 2000, 100, 1).unwrap();
        let zero = decide(0.0, 1, 0.05, &t).unwrap();
        assert!(zero.p_value.unwrap() > 0.99);
        let big = decide(100.0, 1, 0.05, &t).unwrap();
        assert_eq!(big.p_value.unwrap(), 1.0 / 2001.0);
        assert!(big.reject);
    }

    fn shifted_sample() -> CurveSet<f64> {
        let grid = Arc::new(QuadratureGrid::<f64>::new(41, QuadratureRule::Trapezoid).unwrap());
        let n = 40;
        let values = DMatrix::from_fn(n, 41, |i, j| {
            let t = grid.points()[j];
            let wiggle = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5;
            let shift = if i >= 25 { 3.0 * t } else { 0.0 };
            wiggle * (1.0 + t) + shift + 0.3 * ((i as f64) * 1.3 + t * 5.0).sin()
        });
        CurveSet::new(values, grid, Provenance::Raw).unwrap()
    }

    #[test]
    fn paired_modes_share_sample() {
        let curves = shifted_sample();
        let out = run_tests(&curves, &TestConfig::fixed(2, 0.05), &[Mode::H, Mode::S], &table()).unwrap();
        assert_eq!(out.len(), 2);
        let h = &out[0].result;
        assert!(h.reject);
        assert!(h.change_index.abs_diff(25) <= 1, "change index {}", h.change_index);
        assert!((h.theta_hat - h.change_index as f64 / 40.0).abs() < 1e-12);
        assert!(out[0].result.statistic >= out[1].result.statistic);
    }

    #[test]
    fn explained_fraction_rule() {
        let curves = shifted_sample();
        let d = resolve_dimension(&curves, DimensionRule::ExplainedFraction(0.5)).unwrap();
        assert!(d >= 1);
        let r = run_test(&curves, &TestConfig::new(DimensionRule::ExplainedFraction(0.5), 0.05), Mode::H, &table());
        match r {
            Ok(res) => assert_eq!(res.d, d),
            Err(Error::TableMiss { d: missing, .. }) => assert_eq!(missing, d),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn engines_give_same_decision() {
        let curves = shifted_sample();
        let mut cfg = TestConfig::fixed(3, 0.05);
        let a = run_test(&curves, &cfg, Mode::H, &table()).unwrap();
        cfg.engine = Engine::Direct;
        let b = run_test(&curves, &cfg, Mode::H, &table()).unwrap();
        assert!((a.statistic - b.statistic).abs() <= 1e-8 * b.statistic);
        assert_eq!(a.change_index, b.change_index);
    }

    #[test]
    fn bad_configs() {
        let curves = shifted_sample();
        assert!(run_test(&curves, &TestConfig::fixed(0, 0.05), Mode::H, &table()).is_err());
        assert!(run_test(&curves, &TestConfig::fixed(1, 1.5), Mode::H, &table()).is_err());
    }
}
