//! Prequential evaluation: each instance is predicted first, then its label
//! is revealed to the retraining buffer and (in adaptive modes) its error
//! indicator to the change detector.

use std::borrow::Cow;
use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{AdwinConfig, DdmConfig, DetectorConfig, DetectorEvent, Phase};
use crate::features::{extract_features, FeatureError, FeatureRow};
use crate::forest::{mix_seed, train, ForestConfig, ForestError, ForestModel};
use crate::metrics::{derive, ConfusionMatrix};
use crate::report::{RunMode, RunReport, SegmentReport};
use crate::scenarios::{ScenarioError, ShiftSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("stream rows have {data} features, model expects {model}")]
    WidthMismatch { model: usize, data: usize },
    #[error("invalid harness config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnessMode {
    Static,
    AdaptiveDdm,
    AdaptiveAdwin,
}

impl HarnessMode {
    pub const ALL: [HarnessMode; 3] = [HarnessMode::Static, HarnessMode::AdaptiveDdm, HarnessMode::AdaptiveAdwin];

    pub fn run_mode(&self) -> RunMode {
        match self {
            HarnessMode::Static => RunMode::Static,
            HarnessMode::AdaptiveDdm => RunMode::AdaptiveDdm,
            HarnessMode::AdaptiveAdwin => RunMode::AdaptiveAdwin,
        }
    }
}

impl fmt::Display for HarnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.run_mode().as_str())
    }
}

impl FromStr for HarnessMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "static" => Ok(HarnessMode::Static),
            "ddm" => Ok(HarnessMode::AdaptiveDdm),
            "adwin" => Ok(HarnessMode::AdaptiveAdwin),
            _ => Err(HarnessError::InvalidConfig(format!(
                "unknown mode `{s}` (expected static, ddm or adwin)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub mode: HarnessMode,
    pub retrain_window: usize,
    /// Settings for retrained forests; each retrain derives its own seed
    /// from `forest.rng_seed`.
    pub forest: ForestConfig,
    pub ddm: DdmConfig,
    pub adwin: AdwinConfig,
    /// Block length of the per-segment breakdown.
    pub segment_length: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            mode: HarnessMode::Static,
            retrain_window: 2000,
            forest: ForestConfig::default(),
            ddm: DdmConfig::default(),
            adwin: AdwinConfig::default(),
            segment_length: 2000,
        }
    }
}

impl HarnessConfig {
    pub fn with_mode(&self, mode: HarnessMode) -> Self {
        HarnessConfig { mode, ..self.clone() }
    }

    pub fn detector(&self) -> Option<DetectorConfig> {
        match self.mode {
            HarnessMode::Static => None,
            HarnessMode::AdaptiveDdm => Some(DetectorConfig::Ddm(self.ddm.clone())),
            HarnessMode::AdaptiveAdwin => Some(DetectorConfig::Adwin(self.adwin.clone())),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.retrain_window < 2 {
            return Err(HarnessError::InvalidConfig("retrain_window must be at least 2".into()));
        }
        if self.segment_length == 0 {
            return Err(HarnessError::InvalidConfig("segment_length must be positive".into()));
        }
        self.forest.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainAction {
    Retrained,
    SkippedSingleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub step: usize,
    pub trigger: Phase,
    /// Normal and Aging counts in the buffer when the signal arrived.
    pub class_counts: [usize; 2],
    pub action: RetrainAction,
}

/// Per-step record of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub predictions: Vec<u8>,
    /// Number of retrains completed before the prediction at each step.
    pub model_versions: Vec<usize>,
    /// Detector phase changes, plus every drift signal.
    pub detector_events: Vec<DetectorEvent>,
}

pub fn run_prequential(
    stream: &[FeatureRow],
    initial_model: &ForestModel,
    cfg: &HarnessConfig,
) -> Result<RunReport, HarnessError> {
    run_prequential_with_trace(stream, initial_model, cfg).map(|(report, _)| report)
}

pub fn run_prequential_with_trace(
    stream: &[FeatureRow],
    initial_model: &ForestModel,
    cfg: &HarnessConfig,
) -> Result<(RunReport, Trace), HarnessError> {
    cfg.validate()?;
    if let Some(row) = stream.iter().find(|r| r.features.len() != initial_model.n_features) {
        return Err(HarnessError::WidthMismatch {
            model: initial_model.n_features,
            data: row.features.len(),
        });
    }
    let detector_cfg = cfg.detector();
    let mut detector = detector_cfg.as_ref().map(DetectorConfig::build);
    let mut model: Cow<ForestModel> = Cow::Borrowed(initial_model);
    let mut buffer: VecDeque<usize> = VecDeque::with_capacity(cfg.retrain_window + 1);
    let mut buffer_counts = [0usize; 2];
    let mut last_phase = Phase::InControl;

    let mut trace = Trace::default();
    let mut confusion = ConfusionMatrix::default();
    let mut segment = ConfusionMatrix::default();
    let mut segments = Vec::new();
    let mut retrain_events = Vec::new();
    let mut version = 0;

    for (i, row) in stream.iter().enumerate() {
        let prediction = model.predict(&row.features)?;
        trace.predictions.push(prediction);
        trace.model_versions.push(version);
        confusion.record(prediction, row.label);
        segment.record(prediction, row.label);
        if (i + 1) % cfg.segment_length == 0 || i + 1 == stream.len() {
            let start = i + 1 - (i % cfg.segment_length + 1);
            segments.push(SegmentReport::new(start, i + 1, std::mem::take(&mut segment)));
        }

        buffer.push_back(i);
        buffer_counts[usize::from(row.label == 1)] += 1;
        if buffer.len() > cfg.retrain_window {
            let old = buffer.pop_front().expect("non-empty buffer");
            buffer_counts[usize::from(stream[old].label == 1)] -= 1;
        }

        let Some(det) = detector.as_mut() else {
            continue;
        };
        let phase = det.update(prediction != row.label);
        if phase != last_phase || phase == Phase::Drift {
            trace.detector_events.push(DetectorEvent {
                step: i,
                detector: det.name().to_string(),
                phase,
            });
        }
        last_phase = phase;
        if phase != Phase::Drift {
            continue;
        }
        let action = if buffer_counts[0] > 0 && buffer_counts[1] > 0 {
            let rows: Vec<FeatureRow> = buffer.iter().map(|&j| stream[j].clone()).collect();
            let seed = mix_seed(cfg.forest.rng_seed, retrain_events.len() as u64 + 1);
            model = Cow::Owned(train(&rows, &cfg.forest.with_seed(seed))?);
            version += 1;
            RetrainAction::Retrained
        } else {
            RetrainAction::SkippedSingleClass
        };
        log::debug!("step {i}: {} drift, buffer {buffer_counts:?}, {action:?}", det.name());
        retrain_events.push(RetrainEvent {
            step: i,
            trigger: phase,
            class_counts: buffer_counts,
            action,
        });
        det.reset();
        last_phase = Phase::InControl;
    }

    let report = RunReport {
        name: String::new(),
        mode: cfg.mode.run_mode(),
        instances: stream.len(),
        metrics: derive(&confusion),
        confusion,
        forest: cfg.forest.clone(),
        folds: None,
        retrain_window: Some(cfg.retrain_window),
        detector: detector_cfg,
        retrain_events,
        segments,
    };
    Ok((report, trace))
}

/// Generates each scenario, then runs every mode on it from the same
/// initial model. Runs execute in parallel; the output order is scenario
/// major, mode minor.
pub fn run_matrix(
    scenarios: &[ShiftSpec],
    modes: &[HarnessMode],
    initial_model: &ForestModel,
    base: &HarnessConfig,
    feature_window: usize,
) -> Result<Vec<RunReport>, HarnessError> {
    let streams: Vec<Vec<FeatureRow>> = scenarios
        .par_iter()
        .map(|s| Ok(extract_features(&s.generate()?, feature_window)?))
        .collect::<Result<_, HarnessError>>()?;
    let jobs: Vec<(usize, HarnessMode)> = (0..scenarios.len())
        .flat_map(|s| modes.iter().map(move |&m| (s, m)))
        .collect();
    jobs.par_iter()
        .map(|&(s, mode)| {
            let mut report = run_prequential(&streams[s], initial_model, &base.with_mode(mode))?;
            report.name = scenarios[s].name.clone();
            Ok(report)
        })
        .collect()
}

/// One row per report: `scenario,mode,accuracy,precision,recall,f1,retrains,skipped`.
pub fn write_matrix_csv<W: Write>(reports: &[RunReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "scenario,mode,accuracy,precision,recall,f1,retrains,skipped")?;
    for r in reports {
        let m = &r.metrics;
        let skipped = r.retrain_events.len() - r.retrain_count();
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{},{}",
            r.name,
            r.mode.as_str(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            r.retrain_count(),
            skipped
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_features;
    use crate::forest::kfold_evaluate;
    use crate::scenarios::{generate_profile, Preset, ProfileSpec};

    fn small_forest() -> ForestConfig {
        ForestConfig {
            n_trees: 15,
            ..Default::default()
        }
    }

    fn profile_rows(preset: Preset, seed: u64, n: usize) -> Vec<FeatureRow> {
        let mut spec = ProfileSpec::preset(preset, seed);
        spec.total_samples = n;
        extract_features(&generate_profile(&spec).unwrap(), 12).unwrap()
    }

    fn row(x: f64, label: u8) -> FeatureRow {
        FeatureRow {
            features: vec![x],
            label,
            index: 0,
        }
    }

    fn cfg(mode: HarnessMode, window: usize) -> HarnessConfig {
        HarnessConfig {
            mode,
            retrain_window: window,
            forest: small_forest(),
            segment_length: 100,
            ..Default::default()
        }
    }

    #[test]
    fn static_matches_kfold_in_distribution() {
        let train_rows = profile_rows(Preset::Low, 1, 12_000);
        let stream = profile_rows(Preset::Low, 2, 12_000);
        let model = train(&train_rows, &small_forest()).unwrap();
        let kfold = kfold_evaluate(&train_rows, &small_forest(), 5).unwrap();
        let run = run_prequential(&stream, &model, &cfg(HarnessMode::Static, 2000)).unwrap();
        assert!(
            (run.metrics.f1 - kfold.metrics.f1).abs() <= 0.02,
            "static {} vs kfold {}",
            run.metrics.f1,
            kfold.metrics.f1
        );
        assert!(run.retrain_events.is_empty());
    }

    #[test]
    fn silent_detector_equals_static() {
        let train_rows: Vec<FeatureRow> = (0..200).map(|i| row(i as f64, u8::from(i >= 100))).collect();
        let model = train(&train_rows, &small_forest()).unwrap();
        let stream: Vec<FeatureRow> = (0..3000).map(|i| row((i % 200) as f64, u8::from(i % 200 >= 100))).collect();
        let (s, ts) = run_prequential_with_trace(&stream, &model, &cfg(HarnessMode::Static, 500)).unwrap();
        let (a, ta) = run_prequential_with_trace(&stream, &model, &cfg(HarnessMode::AdaptiveAdwin, 500)).unwrap();
        assert_eq!(s.metrics.f1, 1.0);
        assert_eq!(ts.predictions, ta.predictions);
        assert!(a.retrain_events.is_empty());
        assert_eq!(s.confusion, a.confusion);
    }

    #[test]
    fn single_class_buffer_skips_retrain() {
        // model says Aging for x > 50; the stream is all Normal with x = 100,
        // so every prediction is wrong and the buffer holds one class
        let train_rows: Vec<FeatureRow> = (0..100).map(|i| row(i as f64, u8::from(i > 50))).collect();
        let model = train(&train_rows, &small_forest()).unwrap();
        let stream: Vec<FeatureRow> = (0..600).map(|_| row(100.0, 0)).collect();
        // errors from the start never raise DDM above its own minimum, so
        // open with correct predictions
        let mut mixed: Vec<FeatureRow> = (0..300).map(|_| row(0.0, 0)).collect();
        mixed.extend(stream);
        for mode in [HarnessMode::AdaptiveDdm, HarnessMode::AdaptiveAdwin] {
            let (r, t) = run_prequential_with_trace(&mixed, &model, &cfg(mode, 200)).unwrap();
            assert!(!r.retrain_events.is_empty(), "{mode}");
            for e in &r.retrain_events {
                assert_eq!(e.action, RetrainAction::SkippedSingleClass);
                assert_eq!(e.class_counts[1], 0);
            }
            assert!(t.model_versions.iter().all(|&v| v == 0));
            assert!(t.predictions[300..].iter().all(|&p| p == 1));
        }
    }

    #[test]
    fn test_then_train_and_buffer_bookkeeping() {
        let train_rows = profile_rows(Preset::Low, 5, 6000);
        let model = train(&train_rows, &small_forest()).unwrap();
        let mut spec = crate::scenarios::standard_scenarios(3).remove(1);
        for p in &mut spec.profiles {
            p.total_samples = 8000;
        }
        spec.shift = crate::scenarios::ShiftKind::Sudden {
            a: "low".into(),
            b: "high".into(),
            switch_index: 4000,
        };
        let stream = extract_features(&spec.generate().unwrap(), 12).unwrap();
        let window = 700;
        for mode in [HarnessMode::AdaptiveDdm, HarnessMode::AdaptiveAdwin] {
            let c = cfg(mode, window);
            let (report, trace) = run_prequential_with_trace(&stream, &model, &c).unwrap();
            assert!(report.retrain_count() > 0, "{mode} never retrained");
            // replay: rebuild every model from the logged events and check
            // that step i was predicted by a model trained on rows < i only
            let mut current = model.clone();
            let mut version = 0;
            let mut events = report.retrain_events.iter().enumerate().peekable();
            for (i, row) in stream.iter().enumerate() {
                assert_eq!(trace.model_versions[i], version);
                assert_eq!(trace.predictions[i], current.predict(&row.features).unwrap());
                while let Some((k, e)) = events.next_if(|(_, e)| e.step == i) {
                    let lo = (i + 1).saturating_sub(window);
                    let buf = &stream[lo..=i];
                    let ones = buf.iter().filter(|r| r.label == 1).count();
                    assert_eq!(e.class_counts, [buf.len() - ones, ones]);
                    assert_eq!(e.trigger, Phase::Drift);
                    if e.action == RetrainAction::Retrained {
                        let seed = mix_seed(c.forest.rng_seed, k as u64 + 1);
                        current = train(buf, &c.forest.with_seed(seed)).unwrap();
                        version += 1;
                    }
                }
            }
            // detector log: every drift is followed by a retrain event at the same step
            let drifts: Vec<usize> = trace
                .detector_events
                .iter()
                .filter(|e| e.phase == Phase::Drift)
                .map(|e| e.step)
                .collect();
            let steps: Vec<usize> = report.retrain_events.iter().map(|e| e.step).collect();
            assert_eq!(drifts, steps);
            if mode == HarnessMode::AdaptiveDdm {
                // warnings were raised, yet only drift steps retrain
                assert!(trace.detector_events.iter().any(|e| e.phase == Phase::Warning));
            }
        }
    }

    #[test]
    fn segments_partition_the_stream() {
        let stream = profile_rows(Preset::Medium, 1, 1500);
        let model = train(&profile_rows(Preset::Medium, 2, 1500), &small_forest()).unwrap();
        let r = run_prequential(&stream, &model, &cfg(HarnessMode::Static, 100)).unwrap();
        assert_eq!(r.segments.first().unwrap().start, 0);
        assert_eq!(r.segments.last().unwrap().end, stream.len());
        for w in r.segments.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let mut pooled = ConfusionMatrix::default();
        for s in &r.segments {
            pooled.merge(&s.confusion);
        }
        assert_eq!(pooled, r.confusion);
    }

    #[test]
    fn width_mismatch_rejected() {
        let model = train(&[row(1.0, 0), row(2.0, 1)], &small_forest()).unwrap();
        let stream = vec![FeatureRow {
            features: vec![1.0, 2.0],
            label: 0,
            index: 0,
        }];
        assert!(matches!(
            run_prequential(&stream, &model, &HarnessConfig::default()),
            Err(HarnessError::WidthMismatch { model: 1, data: 2 })
        ));
    }

    #[test]
    fn matrix_shape_and_consistency() {
        let mut scenarios = crate::scenarios::standard_scenarios(4);
        for s in &mut scenarios {
            for p in &mut s.profiles {
                p.total_samples = 4000;
            }
            s.shift = match &s.shift {
                crate::scenarios::ShiftKind::Sudden { a, b, .. } => crate::scenarios::ShiftKind::Sudden {
                    a: a.clone(),
                    b: b.clone(),
                    switch_index: 2000,
                },
                crate::scenarios::ShiftKind::Gradual { a, b, .. } => crate::scenarios::ShiftKind::Gradual {
                    a: a.clone(),
                    b: b.clone(),
                    start: 1500,
                    transition_length: 1000,
                },
                crate::scenarios::ShiftKind::Recurring { a, b, .. } => crate::scenarios::ShiftKind::Recurring {
                    a: a.clone(),
                    b: b.clone(),
                    block_length: 1000,
                    cycles: 2,
                },
            };
        }
        let model = train(&profile_rows(Preset::Low, 9, 3000), &small_forest()).unwrap();
        let base = cfg(HarnessMode::Static, 500);
        let a = run_matrix(&scenarios, &HarnessMode::ALL, &model, &base, 12).unwrap();
        let b = run_matrix(&scenarios, &HarnessMode::ALL, &model, &base, 12).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, b);
        let stream = extract_features(&scenarios[2].generate().unwrap(), 12).unwrap();
        let mut standalone = run_prequential(&stream, &model, &base).unwrap();
        standalone.name = scenarios[2].name.clone();
        assert_eq!(a[6], standalone);

        let mut csv = Vec::new();
        write_matrix_csv(&a, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 13);
    }
}
