//! Normal/Aging labels from the trend of a memory series.
//!
//! The pipeline is: drop the warm-up, decompose the remainder with STL,
//! regress the trend in sliding windows, mark every window whose slope
//! exceeds the threshold as Aging, and finally prepend the warm-up as
//! explicit Normal samples.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{stl_decompose, Decomposition, DecompositionError, StlConfig};
use crate::ingest::{
    self, column_indices, normalize_timestamps, IngestError, MemorySample, MemorySeries, Profile,
};

pub const NORMAL: u8 = 0;
pub const AGING: u8 = 1;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("regression window needs at least 2 points, got {0}")]
    WindowTooShort(usize),
    #[error("series of length {len} is shorter than the labeling window {window}")]
    SeriesShorterThanWindow { len: usize, window: usize },
    #[error("invalid labeling config: {0}")]
    InvalidConfig(String),
    #[error("row {row}: label must be 0 or 1, got `{value}`")]
    InvalidLabel { row: usize, value: String },
    #[error("row {row}: unknown provenance `{value}`")]
    InvalidProvenance { row: usize, value: String },
    #[error("{labels} labels for {samples} samples")]
    LengthMismatch { labels: usize, samples: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    /// Regression window, in samples.
    pub window_size: usize,
    pub stride: usize,
    /// Memory units per sample; a window is Aging when its slope is
    /// strictly greater.
    pub slope_threshold: f64,
    pub warmup_seconds: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            window_size: 60,
            stride: 1,
            slope_threshold: 0.5,
            warmup_seconds: 600.0,
        }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<(), LabelingError> {
        let bad = |m: &str| Err(LabelingError::InvalidConfig(m.to_string()));
        if self.window_size < 2 {
            return bad("window_size must be at least 2");
        }
        if self.stride == 0 || self.stride > self.window_size {
            return bad("stride must be in 1..=window_size");
        }
        if !(self.slope_threshold > 0.0) || !self.slope_threshold.is_finite() {
            return bad("slope_threshold must be positive");
        }
        if !(self.warmup_seconds >= 0.0) {
            return bad("warmup_seconds must be non-negative");
        }
        Ok(())
    }
}

/// Where a sample's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Warmup,
    TrendWindow,
    Default,
}

impl Provenance {
    fn for_label(label: u8) -> Self {
        if label == AGING {
            Provenance::TrendWindow
        } else {
            Provenance::Default
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Warmup => "warmup",
            Provenance::TrendWindow => "trend_window",
            Provenance::Default => "default",
        })
    }
}

impl FromStr for Provenance {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "warmup" => Ok(Provenance::Warmup),
            "trend_window" => Ok(Provenance::TrendWindow),
            "default" => Ok(Provenance::Default),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub series: MemorySeries,
    pub labels: Vec<u8>,
    pub provenance: Vec<Provenance>,
}

impl LabeledSeries {
    /// Wraps labels produced outside the trend pipeline (e.g. synthetic
    /// ground truth). Provenance follows the label.
    pub fn from_labels(series: MemorySeries, labels: Vec<u8>) -> Result<Self, LabelingError> {
        if labels.len() != series.len() {
            return Err(LabelingError::LengthMismatch {
                labels: labels.len(),
                samples: series.len(),
            });
        }
        let provenance = labels.iter().map(|&l| Provenance::for_label(l)).collect();
        Ok(LabeledSeries {
            series,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.series.values()
    }

    /// Writes `elapsed_seconds,memory_used,label,provenance`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "elapsed_seconds,memory_used,label,provenance")?;
        for ((s, l), p) in self.series.samples.iter().zip(&self.labels).zip(&self.provenance) {
            writeln!(out, "{},{},{l},{p}", s.elapsed_seconds, s.memory_used)?;
        }
        Ok(())
    }

    /// Writes `elapsed_seconds,memory_used,label` (the scenario schema).
    pub fn write_scenario_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "elapsed_seconds,memory_used,label")?;
        for (s, l) in self.series.samples.iter().zip(&self.labels) {
            writeln!(out, "{},{},{l}", s.elapsed_seconds, s.memory_used)?;
        }
        Ok(())
    }

    /// Reads a labeled or scenario CSV. The `provenance` column is optional.
    pub fn read_csv<R: Read>(reader: R, profile: Profile) -> Result<Self, LabelingError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let prov_col = headers.iter().position(|h| h.trim() == "provenance");
        let required = [ingest::ELAPSED_COLUMN, ingest::MEMORY_COLUMN, "label"];
        let cols = column_indices(&headers, &required)?;
        let mut times = Vec::new();
        let mut memory = Vec::new();
        let mut labels = Vec::new();
        let mut provenance = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let field = |c: usize| record.get(c).unwrap_or("").trim();
            for (c, dst) in [(cols[0], &mut times), (cols[1], &mut memory)] {
                let v: f64 = field(c).parse().map_err(|_| IngestError::Parse {
                    row,
                    value: field(c).to_string(),
                })?;
                if !v.is_finite() {
                    return Err(IngestError::NonFiniteValue { row }.into());
                }
                dst.push(v);
            }
            let label = match field(cols[2]) {
                "0" => NORMAL,
                "1" => AGING,
                other => {
                    return Err(LabelingError::InvalidLabel {
                        row,
                        value: other.to_string(),
                    })
                }
            };
            labels.push(label);
            provenance.push(match prov_col {
                Some(c) => field(c)
                    .parse()
                    .map_err(|_| LabelingError::InvalidProvenance {
                        row,
                        value: field(c).to_string(),
                    })?,
                None => Provenance::for_label(label),
            });
        }
        let interval = normalize_timestamps(&mut times, 1)?;
        let samples = times
            .into_iter()
            .zip(memory)
            .map(|(elapsed_seconds, memory_used)| MemorySample {
                elapsed_seconds,
                memory_used,
            })
            .collect();
        Ok(LabeledSeries {
            series: MemorySeries {
                profile,
                sampling_interval_seconds: interval,
                samples,
            },
            labels,
            provenance,
        })
    }
}

/// Least-squares slope of `y` against `x = 0, 1, ..., len - 1`.
pub fn ols_slope(y: &[f64]) -> Result<f64, LabelingError> {
    let n = y.len();
    if n < 2 {
        return Err(LabelingError::WindowTooShort(n));
    }
    let x_mean = (n as f64 - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (v - y_mean);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Sliding-window slope labels. Overlapping Aging windows combine by OR;
/// samples covered by no Aging window are Normal.
pub fn label_by_trend(trend: &[f64], cfg: &LabelingConfig) -> Result<Vec<u8>, LabelingError> {
    cfg.validate()?;
    let w = cfg.window_size;
    if trend.len() < w {
        return Err(LabelingError::SeriesShorterThanWindow {
            len: trend.len(),
            window: w,
        });
    }
    let mut labels = vec![NORMAL; trend.len()];
    // first index not yet marked, so each sample is written at most once
    let mut marked_to = 0;
    for start in (0..=trend.len() - w).step_by(cfg.stride) {
        if ols_slope(&trend[start..start + w])? > cfg.slope_threshold {
            for l in &mut labels[start.max(marked_to)..start + w] {
                *l = AGING;
            }
            marked_to = start + w;
        }
    }
    Ok(labels)
}

/// Prepends `warmup_len` explicit Normal labels to the body labels.
pub fn consolidate(body_labels: &[u8], warmup_len: usize) -> (Vec<u8>, Vec<Provenance>) {
    let mut labels = vec![NORMAL; warmup_len];
    labels.extend_from_slice(body_labels);
    let mut provenance = vec![Provenance::Warmup; warmup_len];
    provenance.extend(body_labels.iter().map(|&l| Provenance::for_label(l)));
    (labels, provenance)
}

/// Full labeling pipeline over one series. Returns the labeled series and
/// the decomposition of the post-warm-up body.
pub fn label_series(
    series: &MemorySeries,
    cfg: &LabelingConfig,
    period: usize,
    stl: &StlConfig,
) -> Result<(LabeledSeries, Decomposition), LabelingError> {
    cfg.validate()?;
    let (warmup, body) = ingest::remove_warmup(series, cfg.warmup_seconds)?;
    let decomposition = stl_decompose(&body.values(), period, stl)?;
    let body_labels = label_by_trend(&decomposition.trend, cfg)?;
    let (labels, provenance) = consolidate(&body_labels, warmup.len());
    Ok((
        LabeledSeries {
            series: series.clone(),
            labels,
            provenance,
        },
        decomposition,
    ))
}
