//! Synthetic workload profiles and their composition into shift scenarios.
//!
//! A profile alternates flat rest phases (Normal) with leak episodes
//! (Aging) on top of a sinusoidal load cycle and Gaussian noise. Labels are
//! ground truth by construction, independent of the labeling pipeline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{MemorySeries, Profile};
use crate::labeling::{LabeledSeries, AGING, NORMAL};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid profile spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("index {index} out of range for sources of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("source `{source_name}` exhausted: block needs samples up to {needed}, source has {len}")]
    SourceExhausted {
        source_name: String,
        needed: usize,
        len: usize,
    },
    #[error("invalid shift spec: {0}")]
    InvalidShift(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown preset `{0}` (expected low, medium or high)")]
    UnknownPreset(String),
    #[error("scenario file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub name: String,
    pub base_memory: f64,
    /// Memory units added per sample during a leak episode.
    pub leak_rate: f64,
    pub episode_length: usize,
    /// Flat Normal samples between episodes.
    pub rest_length: usize,
    /// Position within the rest-then-episode cycle at the first sample;
    /// 0 opens with a full rest phase, `rest_length` with an episode.
    #[serde(default)]
    pub phase_offset: usize,
    /// Fraction of the accumulated growth released when an episode ends.
    pub release_fraction: f64,
    pub seasonal_amplitude: f64,
    pub seasonal_period: usize,
    pub noise_std: f64,
    pub total_samples: usize,
    pub sampling_interval_seconds: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Low,
    Medium,
    High,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Low, Preset::Medium, Preset::High];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Low => "low",
            Preset::Medium => "medium",
            Preset::High => "high",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, ScenarioError> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Preset::Low),
            "medium" => Ok(Preset::Medium),
            "high" => Ok(Preset::High),
            _ => Err(ScenarioError::UnknownPreset(s.to_string())),
        }
    }
}

pub const DEFAULT_STREAM_LENGTH: usize = 20_000;

impl ProfileSpec {
    /// Workload presets: heavier load leaks faster in shorter episodes and
    /// idles at a higher baseline. Each rests as long as it leaks, and the
    /// series opens at the start of an episode so that the first window of
    /// a monitored stream already holds both classes.
    pub fn preset(preset: Preset, rng_seed: u64) -> Self {
        let (base_memory, leak_rate, episode_length) = match preset {
            Preset::Low => (1000.0, 0.2, 1200),
            Preset::Medium => (1500.0, 0.7, 900),
            Preset::High => (2000.0, 1.5, 600),
        };
        ProfileSpec {
            name: preset.name().to_string(),
            base_memory,
            leak_rate,
            episode_length,
            rest_length: episode_length,
            phase_offset: episode_length,
            release_fraction: 1.0,
            seasonal_amplitude: 5.0,
            seasonal_period: 720,
            noise_std: 1.0,
            total_samples: DEFAULT_STREAM_LENGTH,
            sampling_interval_seconds: 5.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |reason: &str| {
            Err(ScenarioError::InvalidSpec {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.seasonal_period == 0 {
            return fail("seasonal_period must be positive");
        }
        if self.total_samples < 2 * self.seasonal_period {
            return fail("total_samples must be at least 2 * seasonal_period");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.release_fraction) {
            return fail("release_fraction must lie in [0, 1]");
        }
        if !(self.leak_rate >= 0.0 && self.leak_rate.is_finite()) {
            return fail("leak_rate must be finite and non-negative");
        }
        if self.episode_length == 0 {
            return fail("episode_length must be positive");
        }
        if !(self.sampling_interval_seconds > 0.0 && self.sampling_interval_seconds.is_finite()) {
            return fail("sampling_interval_seconds must be positive");
        }
        if !self.base_memory.is_finite() || !self.seasonal_amplitude.is_finite() {
            return fail("base_memory and seasonal_amplitude must be finite");
        }
        Ok(())
    }
}

pub fn generate_profile(spec: &ProfileSpec) -> Result<LabeledSeries, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
    let cycle = spec.rest_length + spec.episode_length;
    let mut growth = 0.0;
    let mut values = Vec::with_capacity(spec.total_samples);
    let mut labels = Vec::with_capacity(spec.total_samples);
    for t in 0..spec.total_samples {
        let pos = (t + spec.phase_offset) % cycle;
        if pos == 0 && t > 0 {
            growth -= spec.release_fraction * growth;
        }
        let rising = pos >= spec.rest_length && spec.leak_rate > 0.0;
        if rising {
            growth += spec.leak_rate;
        }
        let phase = 2.0 * PI * t as f64 / spec.seasonal_period as f64;
        let v = spec.base_memory + growth + spec.seasonal_amplitude * phase.sin() + noise.sample(&mut rng);
        values.push(v);
        labels.push(if rising { AGING } else { NORMAL });
    }
    let series = MemorySeries::from_values(
        Profile::Synthetic(spec.name.clone()),
        spec.sampling_interval_seconds,
        &values,
    );
    Ok(LabeledSeries::from_labels(series, labels).expect("one label per sample"))
}

struct Builder {
    values: Vec<f64>,
    labels: Vec<u8>,
}

impl Builder {
    fn with_capacity(n: usize) -> Self {
        Builder {
            values: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, src: &LabeledSeries, i: usize, offset: f64) {
        self.values.push(src.series.samples[i].memory_used + offset);
        self.labels.push(src.labels[i]);
    }

    fn finish(self, name: &str, interval: f64) -> LabeledSeries {
        let series = MemorySeries::from_values(Profile::Synthetic(name.to_string()), interval, &self.values);
        LabeledSeries::from_labels(series, self.labels).expect("one label per sample")
    }
}

/// Offset that makes `b` continue from `a` at `index`: the step from
/// `index - 1` to `index` is taken from `b`.
fn seam_offset(a: &LabeledSeries, b: &LabeledSeries, index: usize) -> f64 {
    if index == 0 {
        0.0
    } else {
        a.series.samples[index - 1].memory_used - b.series.samples[index - 1].memory_used
    }
}

/// `a[..switch]` followed by `b[switch..]`, with `b` shifted to continue
/// from the last `a` sample.
pub fn compose_sudden(a: &LabeledSeries, b: &LabeledSeries, switch_index: usize) -> Result<LabeledSeries, ScenarioError> {
    let limit = a.len().min(b.len());
    if switch_index > limit {
        return Err(ScenarioError::IndexOutOfRange {
            index: switch_index,
            len: limit,
        });
    }
    let offset = seam_offset(a, b, switch_index);
    let mut out = Builder::with_capacity(b.len());
    for i in 0..switch_index {
        out.push(a, i, 0.0);
    }
    for i in switch_index..b.len() {
        out.push(b, i, offset);
    }
    Ok(out.finish("sudden", a.series.sampling_interval_seconds))
}

/// Index-aligned mixing: sample `i` of the transition is `b[i]` with
/// probability `(i - start + 1) / transition_length`, otherwise `a[i]`.
pub fn compose_gradual(
    a: &LabeledSeries,
    b: &LabeledSeries,
    start: usize,
    transition_length: usize,
    rng_seed: u64,
) -> Result<LabeledSeries, ScenarioError> {
    let limit = a.len().min(b.len());
    if transition_length == 0 {
        return Err(ScenarioError::InvalidShift("transition_length must be at least 1".into()));
    }
    if start + transition_length > limit {
        return Err(ScenarioError::IndexOutOfRange {
            index: start + transition_length,
            len: limit,
        });
    }
    let offset = seam_offset(a, b, start);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Builder::with_capacity(b.len());
    for i in 0..b.len() {
        let from_b = if i < start {
            false
        } else if i >= start + transition_length {
            true
        } else {
            let p = (i - start + 1) as f64 / transition_length as f64;
            rng.random_bool(p)
        };
        if from_b {
            out.push(b, i, offset);
        } else {
            out.push(a, i, 0.0);
        }
    }
    Ok(out.finish("gradual", a.series.sampling_interval_seconds))
}

/// Alternating blocks A, B, A, B, ... each source consumed from its own
/// start. Every block is shifted to continue from the previous output
/// sample.
pub fn compose_recurring(
    a: &LabeledSeries,
    b: &LabeledSeries,
    block_length: usize,
    cycles: usize,
) -> Result<LabeledSeries, ScenarioError> {
    if block_length == 0 || cycles == 0 {
        return Err(ScenarioError::InvalidShift(
            "block_length and cycles must be positive".into(),
        ));
    }
    let needed = block_length * cycles;
    for (src, name) in [(a, "a"), (b, "b")] {
        if src.len() < needed {
            return Err(ScenarioError::SourceExhausted {
                source_name: name.to_string(),
                needed,
                len: src.len(),
            });
        }
    }
    let mut out = Builder::with_capacity(2 * needed);
    for cycle in 0..cycles {
        let start = cycle * block_length;
        for src in [a, b] {
            let offset = match out.values.last() {
                None => 0.0,
                Some(&last) => last - src.series.samples[start.saturating_sub(1)].memory_used,
            };
            for i in start..start + block_length {
                out.push(src, i, offset);
            }
        }
    }
    Ok(out.finish("recurring", a.series.sampling_interval_seconds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftKind {
    Sudden {
        a: String,
        b: String,
        switch_index: usize,
    },
    Gradual {
        a: String,
        b: String,
        start: usize,
        transition_length: usize,
    },
    Recurring {
        a: String,
        b: String,
        block_length: usize,
        cycles: usize,
    },
}

impl ShiftKind {
    pub fn sources(&self) -> (&str, &str) {
        match self {
            ShiftKind::Sudden { a, b, .. } | ShiftKind::Gradual { a, b, .. } | ShiftKind::Recurring { a, b, .. } => {
                (a, b)
            }
        }
    }
}

/// A named shift scenario with its component profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub name: String,
    /// Seed for stochastic composition (gradual mixing).
    pub rng_seed: u64,
    pub shift: ShiftKind,
    pub profiles: Vec<ProfileSpec>,
}

impl ShiftSpec {
    pub fn profile(&self, name: &str) -> Result<&ProfileSpec, ScenarioError> {
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ScenarioError::UnknownProfile(name.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (a, b) = self.shift.sources();
        let (pa, pb) = (self.profile(a)?, self.profile(b)?);
        pa.validate()?;
        pb.validate()?;
        let limit = pa.total_samples.min(pb.total_samples);
        let bad = |msg: String| Err(ScenarioError::InvalidShift(msg));
        match self.shift {
            ShiftKind::Sudden { switch_index, .. } if switch_index > limit => {
                bad(format!("switch_index {switch_index} beyond stream length {limit}"))
            }
            ShiftKind::Gradual {
                start,
                transition_length,
                ..
            } if transition_length == 0 || start + transition_length > limit => bad(format!(
                "transition [{start}, {}) must be non-empty and within {limit}",
                start + transition_length
            )),
            ShiftKind::Recurring {
                block_length, cycles, ..
            } if cycles < 2 || block_length == 0 || block_length * cycles > limit => bad(format!(
                "recurring needs cycles >= 2 and {cycles} blocks of {block_length} within {limit}"
            )),
            _ => Ok(()),
        }
    }

    pub fn generate(&self) -> Result<LabeledSeries, ScenarioError> {
        self.validate()?;
        let (a, b) = self.shift.sources();
        let sa = generate_profile(self.profile(a)?)?;
        let sb = generate_profile(self.profile(b)?)?;
        let mut out = match self.shift {
            ShiftKind::Sudden { switch_index, .. } => compose_sudden(&sa, &sb, switch_index)?,
            ShiftKind::Gradual {
                start,
                transition_length,
                ..
            } => compose_gradual(&sa, &sb, start, transition_length, self.rng_seed)?,
            ShiftKind::Recurring {
                block_length, cycles, ..
            } => compose_recurring(&sa, &sb, block_length, cycles)?,
        };
        out.series.profile = Profile::Synthetic(self.name.clone());
        Ok(out)
    }

    /// Parses the TOML scenario format. Each `[[profiles]]` entry may name a
    /// `preset` whose fields it then overrides.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        if let Some(toml::Value::Array(profiles)) = doc.get_mut("profiles") {
            for entry in profiles.iter_mut() {
                let toml::Value::Table(table) = entry else {
                    return Err(ScenarioError::Parse("profiles entries must be tables".into()));
                };
                if let Some(preset) = table.remove("preset") {
                    let preset: Preset = preset
                        .as_str()
                        .ok_or_else(|| ScenarioError::Parse("preset must be a string".into()))?
                        .parse()?;
                    let seed = table.get("rng_seed").and_then(|v| v.as_integer()).unwrap_or(0) as u64;
                    let base = toml::Table::try_from(ProfileSpec::preset(preset, seed))
                        .map_err(|e| ScenarioError::Parse(e.to_string()))?;
                    let overrides = std::mem::replace(table, base);
                    table.extend(overrides);
                }
            }
        }
        let spec: ShiftSpec = doc.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Fails when a seed does not fit in a TOML integer (above `i64::MAX`).
    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }
}

/// Seed of the `stream`-th profile derived from `seed`. Kept below 2^63 so
/// that specs holding it still serialize to TOML.
pub fn profile_seed(seed: u64, stream: u64) -> u64 {
    crate::forest::mix_seed(seed, stream) >> 1
}

/// Low-workload profile the reference static model is trained on. Its seed
/// stream is disjoint from those of `standard_scenarios`.
pub fn reference_training_profile(seed: u64) -> ProfileSpec {
    ProfileSpec::preset(Preset::Low, profile_seed(seed, 0))
}

/// The four shift scenarios of the evaluation matrix, all of
/// `DEFAULT_STREAM_LENGTH` samples, with profile seeds derived from `seed`.
pub fn standard_scenarios(seed: u64) -> Vec<ShiftSpec> {
    let n = DEFAULT_STREAM_LENGTH;
    let profiles = |a: Preset, b: Preset, salt: u64| {
        let mut pa = ProfileSpec::preset(a, profile_seed(seed, 2 * salt));
        let mut pb = ProfileSpec::preset(b, profile_seed(seed, 2 * salt + 1));
        pa.total_samples = n;
        pb.total_samples = n;
        vec![pa, pb]
    };
    vec![
        ShiftSpec {
            name: "sudden_low_medium".into(),
            rng_seed: seed,
            shift: ShiftKind::Sudden {
                a: "low".into(),
                b: "medium".into(),
                switch_index: n / 2,
            },
            profiles: profiles(Preset::Low, Preset::Medium, 1),
        },
        ShiftSpec {
            name: "sudden_low_high".into(),
            rng_seed: seed,
            shift: ShiftKind::Sudden {
                a: "low".into(),
                b: "high".into(),
                switch_index: n / 2,
            },
            profiles: profiles(Preset::Low, Preset::High, 2),
        },
        ShiftSpec {
            name: "gradual_low_high".into(),
            rng_seed: seed,
            shift: ShiftKind::Gradual {
                a: "low".into(),
                b: "high".into(),
                start: n / 2 - 1000,
                transition_length: 2000,
            },
            profiles: profiles(Preset::Low, Preset::High, 3),
        },
        ShiftSpec {
            name: "recurring_medium_high".into(),
            rng_seed: seed,
            shift: ShiftKind::Recurring {
                a: "medium".into(),
                b: "high".into(),
                block_length: n / 8,
                cycles: 4,
            },
            profiles: profiles(Preset::Medium, Preset::High, 4),
        },
    ]
}

/// Counts of each label value, for bookkeeping checks.
pub fn label_histogram(labels: &[u8]) -> BTreeMap<u8, usize> {
    let mut h = BTreeMap::new();
    for &l in labels {
        *h.entry(l).or_insert(0) += 1;
    }
    h
}
