//! Causal per-sample feature vectors for the classifier.
//!
//! Row `i` only looks at samples `i - window + 1 ..= i` (plus `i - 1` for the
//! first difference), so the same rows can be produced incrementally in a
//! stream without future leakage.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{ols_slope, LabeledSeries};

pub const FEATURE_NAMES: [&str; 5] = [
    "memory_used",
    "rolling_mean",
    "rolling_std",
    "rolling_slope",
    "first_difference",
];
pub const FEATURE_WIDTH: usize = FEATURE_NAMES.len();
pub const DEFAULT_WINDOW: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("series of length {len} needs more than {window} samples")]
    SeriesTooShort { len: usize, window: usize },
    #[error("feature window must be at least 2, got {0}")]
    InvalidWindow(usize),
    #[error("{labels} labels for {values} values")]
    LengthMismatch { labels: usize, values: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub features: Vec<f64>,
    pub label: u8,
    /// Index of the source sample.
    pub index: usize,
}

pub fn extract_features(series: &LabeledSeries, window: usize) -> Result<Vec<FeatureRow>, FeatureError> {
    extract_from_values(&series.values(), &series.labels, window)
}

pub fn extract_from_values(
    values: &[f64],
    labels: &[u8],
    window: usize,
) -> Result<Vec<FeatureRow>, FeatureError> {
    if window < 2 {
        return Err(FeatureError::InvalidWindow(window));
    }
    if values.len() != labels.len() {
        return Err(FeatureError::LengthMismatch {
            labels: labels.len(),
            values: values.len(),
        });
    }
    if values.len() <= window {
        return Err(FeatureError::SeriesTooShort {
            len: values.len(),
            window,
        });
    }
    let n = window as f64;
    let rows = (window..values.len())
        .map(|i| {
            let w = &values[i + 1 - window..=i];
            let mean = w.iter().sum::<f64>() / n;
            let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let slope = ols_slope(w).expect("window >= 2");
            FeatureRow {
                features: vec![values[i], mean, var.sqrt(), slope, values[i] - values[i - 1]],
                label: labels[i],
                index: i,
            }
        })
        .collect();
    Ok(rows)
}

/// Writes the feature matrix as CSV with an `index` column first and the
/// label last.
pub fn write_csv<W: Write>(rows: &[FeatureRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "index,{},label", FEATURE_NAMES.join(","))?;
    for row in rows {
        write!(out, "{}", row.index)?;
        for f in &row.features {
            write!(out, ",{f}")?;
        }
        writeln!(out, ",{}", row.label)?;
    }
    Ok(())
}
