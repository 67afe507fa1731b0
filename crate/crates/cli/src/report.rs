//! JSON run report and tidy plot data.

use fdchange::cptest::{DimensionRule, Engine, Mode, NodeStatus};
use fdchange::limitsim::TableProvenance;
use serde::{Deserialize, Serialize};

use crate::ingest::AbscissaRange;

/// Bumped only for incompatible changes; new fields are added as optional.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub input: InputSummary,
    pub settings: Settings,
    pub table: TableSummary,
    /// One row per tested or untested segment and mode, in visiting order.
    pub segments: Vec<SegmentRow>,
    pub change_points: Vec<ChangePoints>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub path: String,
    pub n: usize,
    pub raw_points: usize,
    pub working_points: usize,
    /// `raw`, `resample` or `smooth`.
    pub preprocessing: String,
    #[serde(default)]
    pub basis_size: Option<usize>,
    #[serde(default)]
    pub abscissae_rescaled_from: Option<AbscissaRange>,
    pub labelled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub dims: DimensionRule,
    pub alpha: f64,
    pub modes: Vec<Mode>,
    pub segment: bool,
    pub min_segment: usize,
    pub engine: Engine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub provenance: TableProvenance,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub mode: Mode,
    pub depth: usize,
    /// First curve of the segment, one-based.
    pub first: usize,
    /// Last curve of the segment, one-based, inclusive.
    pub last: usize,
    /// `first-last`, or the matching row labels.
    pub segment: String,
    pub status: NodeStatus,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub statistic: Option<f64>,
    #[serde(default)]
    pub critical_value: Option<f64>,
    #[serde(default)]
    pub p_value: Option<f64>,
    #[serde(default)]
    pub theta_hat: Option<f64>,
    /// Curves `..change_point` precede the estimated change (rejections only).
    #[serde(default)]
    pub change_point: Option<usize>,
    #[serde(default)]
    pub change_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePoints {
    pub mode: Mode,
    pub indices: Vec<usize>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

impl RunReport {
    pub fn rejected(&self, mode: Mode) -> bool {
        self.change_points
            .iter()
            .find(|c| c.mode == mode)
            .is_some_and(|c| !c.indices.is_empty())
    }
}

/// Label of curve `index` (zero-based), or its one-based number.
pub fn curve_label(labels: Option<&[String]>, index: usize) -> String {
    labels
        .and_then(|l| l.get(index).cloned())
        .unwrap_or_else(|| (index + 1).to_string())
}

/// One line of the plot-data CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow<'a> {
    /// `cusum`, `segment_mean` or `eigenfunction`.
    pub series: &'a str,
    pub mode: String,
    pub segment: String,
    /// Split index for `cusum`, eigenfunction number, curve count for `segment_mean`.
    pub index: usize,
    pub x: f64,
    pub value: f64,
}
