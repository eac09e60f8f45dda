//! Run reports shared by cross-validation and the streaming harness.

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorConfig;
use crate::forest::ForestConfig;
use crate::harness::RetrainEvent;
use crate::metrics::{derive, ConfusionMatrix, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    KFold,
    Static,
    AdaptiveDdm,
    AdaptiveAdwin,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::KFold => "kfold",
            RunMode::Static => "static",
            RunMode::AdaptiveDdm => "ddm",
            RunMode::AdaptiveAdwin => "adwin",
        }
    }
}

/// Metrics over a contiguous slice of the run: a fold for cross-validation,
/// a block of steps for streaming runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub start: usize,
    pub end: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl SegmentReport {
    pub fn new(start: usize, end: usize, confusion: ConfusionMatrix) -> Self {
        SegmentReport {
            start,
            end,
            metrics: derive(&confusion),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub mode: RunMode,
    pub instances: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub forest: ForestConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrain_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    pub retrain_events: Vec<RetrainEvent>,
    pub segments: Vec<SegmentReport>,
}

impl RunReport {
    pub fn retrain_count(&self) -> usize {
        self.retrain_events
            .iter()
            .filter(|e| e.action == crate::harness::RetrainAction::Retrained)
            .count()
    }
}
