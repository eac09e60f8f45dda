//! Binary classification metrics. The positive class is Aging (`1`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and truths ({truths}) differ in length")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("label {value} at index {index} is not 0 or 1")]
    InvalidLabel { index: usize, value: u8 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Adds one scored instance.
    pub fn record(&mut self, prediction: u8, truth: u8) {
        match (prediction, truth) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Metrics derived from a confusion matrix. A ratio whose denominator is
/// zero is reported as `0.0` and named in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

pub fn score(predictions: &[u8], truths: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (index, (&p, &t)) in predictions.iter().zip(truths).enumerate() {
        for value in [p, t] {
            if value > 1 {
                return Err(MetricsError::InvalidLabel { index, value });
            }
        }
        cm.record(p, t);
    }
    Ok(cm)
}

fn ratio(num: f64, den: f64, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

pub fn derive(cm: &ConfusionMatrix) -> Metrics {
    let mut degenerate = Vec::new();
    let tp = cm.tp as f64;
    let accuracy = ratio(tp + cm.tn as f64, cm.total() as f64, "accuracy", &mut degenerate);
    let precision = ratio(tp, tp + cm.fp as f64, "precision", &mut degenerate);
    let recall = ratio(tp, tp + cm.fn_ as f64, "recall", &mut degenerate);
    let f1 = ratio(
        2.0 * precision * recall,
        precision + recall,
        "f1",
        &mut degenerate,
    );
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        degenerate,
    }
}
