//! Monte Carlo machinery: Gaussian sample paths, drift injection, quantiles
//! of the limit law, and the power-study driver.

mod generate;
mod power;
mod table;

pub use generate::{
    apply_drift, apply_scaled_drift, simulate_bb, simulate_bm, simulate_curves, Drift, GaussianProcess,
};
pub use power::{
    comparison_configs, power_study, replicate, write_power_csv, PowerRow, Preprocess, Replication, SimConfig,
    COMPARISON_K_STARS,
};
pub use table::{
    cache_dir_from_env, cached_limit_quantiles, limit_quantiles, limit_samples, CriticalValueTable,
    TableProvenance, CACHE_ENV, DEFAULT_BRIDGE_GRID, DEFAULT_PVALUE_REPS, DEFAULT_TABLE_REPS,
};
