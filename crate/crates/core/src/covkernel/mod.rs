//! Covariance kernel estimators: pooled, split, bias correction, the
//! all-splits sweep, and the probability limit of the split estimator.

mod kernel;
mod sweep;
mod theory;

pub use kernel::{
    bias_correct, bias_factor, pooled_kernel, segment_means, split_kernel, split_kernel_with,
    BoundaryRule, KernelEstimate, SegmentMeans, Split,
};
pub use sweep::{kernel_sweep, KernelSweep};
pub use theory::{f_theta, target_kernel, DriftSpec};
