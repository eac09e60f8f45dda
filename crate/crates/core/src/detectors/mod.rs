//! Streaming change detectors fed with a model's 0/1 error stream.

mod adwin;
mod ddm;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adwin::{epsilon_cut, AdwinConfig, AdwinState, Bucket};
pub use ddm::{DdmConfig, DdmState};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("detector input {0} is outside [0, 1]")]
    ValueOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    InControl,
    Warning,
    /// DDM drift, or an ADWIN window cut.
    Drift,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::InControl => "in_control",
            Phase::Warning => "warning",
            Phase::Drift => "drift",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorConfig {
    Ddm(DdmConfig),
    Adwin(AdwinConfig),
}

impl DetectorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorConfig::Ddm(_) => "ddm",
            DetectorConfig::Adwin(_) => "adwin",
        }
    }

    pub fn build(&self) -> Detector {
        match self {
            DetectorConfig::Ddm(c) => Detector::Ddm(DdmState::new(c.clone())),
            DetectorConfig::Adwin(c) => Detector::Adwin(AdwinState::new(c.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Ddm(DdmState),
    Adwin(AdwinState),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Ddm(_) => "ddm",
            Detector::Adwin(_) => "adwin",
        }
    }

    /// Feeds one misclassification indicator.
    pub fn update(&mut self, error: bool) -> Phase {
        match self {
            Detector::Ddm(d) => d.update(error),
            Detector::Adwin(a) => {
                let changed = a
                    .update(f64::from(u8::from(error)))
                    .expect("0/1 indicators are in range");
                if changed {
                    Phase::Drift
                } else {
                    Phase::InControl
                }
            }
        }
    }

    pub fn reset(&mut self) {
        match self {
            Detector::Ddm(d) => d.reset(),
            Detector::Adwin(a) => a.reset(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEvent {
    pub step: usize,
    pub detector: String,
    pub phase: Phase,
}

/// Writes the audit log as `step,detector,phase`.
pub fn write_events_csv<W: Write>(events: &[DetectorEvent], mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,detector,phase")?;
    for e in events {
        writeln!(out, "{},{},{}", e.step, e.detector, e.phase)?;
    }
    Ok(())
}
