use serde::{Deserialize, Serialize};

use super::decision::{run_tests, TestConfig, TestOutcome, TestResult};
use super::process::Mode;
use crate::error::{invalid, Error, Result};
use crate::fdobj::CurveSet;
use crate::limitsim::CriticalValueTable;
use crate::scalar::Scalar;

/// Smallest admissible `min_segment`.
pub const MIN_SEGMENT_FLOOR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub test: TestConfig,
    pub mode: Mode,
    /// Segments shorter than this are not tested.
    pub min_segment: usize,
}

impl SegmentationConfig {
    pub fn new(test: TestConfig, mode: Mode) -> Self {
        Self {
            test,
            mode,
            min_segment: MIN_SEGMENT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    /// No change detected; a leaf.
    Accepted,
    /// Change detected; the node has two children.
    Rejected,
    /// Shorter than `min_segment`; not tested.
    TooShort,
    /// Every curve in the segment is identical.
    Degenerate,
}

/// Curves `start..end` (zero-based, half-open) of the full sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentNode {
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    pub status: NodeStatus,
    pub result: Option<TestResult>,
    /// On rejection: number of curves of the full sample before the change.
    pub change_point: Option<usize>,
    pub children: Vec<usize>,
}

impl SegmentNode {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Nodes in depth-first order (root first, earlier segment before later).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationTree {
    pub nodes: Vec<SegmentNode>,
    /// Sorted change points; `c` means curves `..c` and `c..` differ.
    pub change_points: Vec<usize>,
}

impl SegmentationTree {
    pub fn root(&self) -> &SegmentNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SegmentNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn accepted_leaves(&self) -> impl Iterator<Item = &SegmentNode> {
        self.leaves().filter(|n| n.status == NodeStatus::Accepted)
    }
}

/// Repeated test-and-split. A rejected segment `[a, b)` with estimated
/// change index `k` splits into `[a, a + k)` and `[a + k, b)`.
pub fn binary_segmentation<T: Scalar>(
    curves: &CurveSet<T>,
    config: &SegmentationConfig,
    table: &CriticalValueTable,
) -> Result<SegmentationTree> {
    binary_segmentation_with(curves, config, table, |_, _| {})
}

/// [`binary_segmentation`] that also hands every tested node's outcome to
/// `visit` together with the node's index.
pub fn binary_segmentation_with<T: Scalar>(
    curves: &CurveSet<T>,
    config: &SegmentationConfig,
    table: &CriticalValueTable,
    mut visit: impl FnMut(usize, &TestOutcome<T>),
) -> Result<SegmentationTree> {
    if config.min_segment < MIN_SEGMENT_FLOOR {
        return Err(invalid(format!(
            "min_segment must be at least {MIN_SEGMENT_FLOOR}, got {}",
            config.min_segment
        )));
    }
    let mut nodes: Vec<SegmentNode> = Vec::new();
    let mut change_points = Vec::new();
    // (start, end, depth, parent)
    let mut stack = vec![(0usize, curves.n(), 0usize, None::<usize>)];
    while let Some((start, end, depth, parent)) = stack.pop() {
        let id = nodes.len();
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        let mut node = SegmentNode {
            start,
            end,
            depth,
            status: NodeStatus::TooShort,
            result: None,
            change_point: None,
            children: Vec::new(),
        };
        if end - start < config.min_segment {
            nodes.push(node);
            continue;
        }
        let segment = curves.segment(start, end)?;
        let outcome = match run_tests(&segment, &config.test, &[config.mode], table) {
            Ok(mut v) => v.remove(0),
            Err(Error::DegenerateData(_)) => {
                node.status = NodeStatus::Degenerate;
                nodes.push(node);
                continue;
            }
            Err(e) => return Err(e),
        };
        visit(id, &outcome);
        let result = outcome.result;
        if result.reject {
            let cp = start + result.change_index;
            node.status = NodeStatus::Rejected;
            node.change_point = Some(cp);
            change_points.push(cp);
            // later segment pushed first so the earlier one is visited first
            stack.push((cp, end, depth + 1, Some(id)));
            stack.push((start, cp, depth + 1, Some(id)));
        } else {
            node.status = NodeStatus::Accepted;
        }
        node.result = Some(result);
        nodes.push(node);
    }
    change_points.sort_unstable();
    Ok(SegmentationTree { nodes, change_points })
}
