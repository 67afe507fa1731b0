//! Scores, the CUSUM process `R_N`, the statistics `H_{N,d}` and `S_{N,d}`,
//! decisions against critical values, and binary segmentation.

mod decision;
pub(crate) mod downdate;
mod process;
mod segmentation;

pub use decision::{
    decide, resolve_dimension, run_test, run_tests, Decision, DimensionRule, TestConfig, TestOutcome, TestResult,
};
pub(crate) use process::rank_one_process;
pub use process::{
    estimate_change_point, h_statistic, r_process, r_process_with, scores, CusumProcess, Engine, Mode,
    ProcessOptions,
};
pub use segmentation::{
    binary_segmentation, binary_segmentation_with, NodeStatus, SegmentNode, SegmentationConfig, SegmentationTree,
    MIN_SEGMENT_FLOOR,
};
