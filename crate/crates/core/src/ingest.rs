//! Loading, validating and writing memory-usage time series.
//!
//! The CSV schema is a header `elapsed_seconds,memory_used` followed by one
//! row per sample. Extra columns are ignored. Row numbers in errors count
//! data rows from 1 (the header is not counted).
//!
//! Memory units are abstract: whatever the source file uses. Thresholds
//! applied downstream (e.g. the labeling slope) are in the same units.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ELAPSED_COLUMN: &str = "elapsed_seconds";
pub const MEMORY_COLUMN: &str = "memory_used";

/// Maximum relative deviation of a timestamp delta from the median delta.
pub const INTERVAL_TOLERANCE: f64 = 0.10;

/// Timestamps within this relative distance of the regular grid are kept
/// verbatim; the rest are snapped onto it.
const GRID_SNAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}: timestamp does not increase")]
    NonMonotonicTimestamps { row: usize },
    #[error("row {row}: value is not a finite number")]
    NonFiniteValue { row: usize },
    #[error("row {row}: cannot parse `{value}` as a number")]
    Parse { row: usize, value: String },
    #[error("row {row}: interval deviates more than 10% from the median interval {median}")]
    IrregularInterval { row: usize, median: f64 },
    #[error("row {row}: negative value")]
    NegativeValue { row: usize },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("at least two samples are needed to infer the sampling interval, found {0}")]
    TooFewSamples(usize),
    #[error("warm-up of {warmup_seconds} s leaves no samples")]
    WarmupConsumesEverything { warmup_seconds: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Low,
    Medium,
    High,
    Synthetic(String),
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Low => f.write_str("low"),
            Profile::Medium => f.write_str("medium"),
            Profile::High => f.write_str("high"),
            Profile::Synthetic(name) => f.write_str(name),
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "low" => Profile::Low,
            "medium" => Profile::Medium,
            "high" => Profile::High,
            _ => Profile::Synthetic(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemorySample {
    pub elapsed_seconds: f64,
    pub memory_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySeries {
    pub profile: Profile,
    pub sampling_interval_seconds: f64,
    pub samples: Vec<MemorySample>,
}

impl MemorySeries {
    /// Builds a series on a regular grid starting at `t = 0`.
    pub fn from_values(profile: Profile, sampling_interval_seconds: f64, values: &[f64]) -> Self {
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &memory_used)| MemorySample {
                elapsed_seconds: i as f64 * sampling_interval_seconds,
                memory_used,
            })
            .collect();
        MemorySeries {
            profile,
            sampling_interval_seconds,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.memory_used).collect()
    }
}

fn parse_field(raw: &str, row: usize) -> Result<f64, IngestError> {
    let value: f64 = raw.trim().parse().map_err(|_| IngestError::Parse {
        row,
        value: raw.to_string(),
    })?;
    if !value.is_finite() {
        return Err(IngestError::NonFiniteValue { row });
    }
    if value < 0.0 {
        return Err(IngestError::NegativeValue { row });
    }
    Ok(value)
}

/// Locates the named columns in a CSV header, warning about extras.
pub(crate) fn column_indices(
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<Vec<usize>, IngestError> {
    let indices = required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for h in headers.iter() {
        if !required.contains(&h.trim()) {
            log::warn!("ignoring extra column `{h}`");
        }
    }
    Ok(indices)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Validates raw timestamps, infers the interval and snaps jittered
/// timestamps onto the regular grid. `row_offset` maps sample index to
/// reported row number.
pub(crate) fn normalize_timestamps(
    times: &mut [f64],
    row_offset: usize,
) -> Result<f64, IngestError> {
    if times.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            return Err(IngestError::NonMonotonicTimestamps { row: i + row_offset });
        }
    }
    if times.len() < 2 {
        return Err(IngestError::TooFewSamples(times.len()));
    }
    let deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let interval = median(&mut deltas.clone());
    for (i, d) in deltas.iter().enumerate() {
        if ((d - interval) / interval).abs() > INTERVAL_TOLERANCE {
            return Err(IngestError::IrregularInterval {
                row: i + 1 + row_offset,
                median: interval,
            });
        }
    }
    let origin = times[0];
    for (i, t) in times.iter_mut().enumerate() {
        let grid = origin + i as f64 * interval;
        if (*t - grid).abs() > GRID_SNAP_TOLERANCE * interval {
            *t = grid;
        }
    }
    Ok(interval)
}

pub fn read_csv<R: Read>(reader: R, profile: Profile) -> Result<MemorySeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let cols = column_indices(rdr.headers()?, &[ELAPSED_COLUMN, MEMORY_COLUMN])?;
    let mut times = Vec::new();
    let mut memory = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        times.push(parse_field(field(cols[0]), row)?);
        memory.push(parse_field(field(cols[1]), row)?);
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
    Ok(MemorySeries {
        profile,
        sampling_interval_seconds: interval,
        samples,
    })
}

pub fn load_csv(path: impl AsRef<Path>, profile: Profile) -> Result<MemorySeries, IngestError> {
    read_csv(std::fs::File::open(path)?, profile)
}

/// Writes the two-column CSV. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv<W: Write>(series: &MemorySeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{ELAPSED_COLUMN},{MEMORY_COLUMN}")?;
    for s in &series.samples {
        writeln!(out, "{},{}", s.elapsed_seconds, s.memory_used)?;
    }
    Ok(())
}

/// Splits off the samples with `elapsed_seconds < warmup_seconds`.
pub fn remove_warmup(
    series: &MemorySeries,
    warmup_seconds: f64,
) -> Result<(MemorySeries, MemorySeries), IngestError> {
    if series.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    let cut = series
        .samples
        .partition_point(|s| s.elapsed_seconds < warmup_seconds);
    if cut == series.len() {
        return Err(IngestError::WarmupConsumesEverything { warmup_seconds });
    }
    let part = |samples: &[MemorySample]| MemorySeries {
        profile: series.profile.clone(),
        sampling_interval_seconds: series.sampling_interval_seconds,
        samples: samples.to_vec(),
    };
    Ok((part(&series.samples[..cut]), part(&series.samples[cut..])))
}
