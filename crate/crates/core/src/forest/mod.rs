//! Random forest of CART classification trees.
//!
//! Every tree draws its own bootstrap sample and per-node feature subsets
//! from an RNG seeded by `(rng_seed, tree index)` alone, so trees can be
//! grown in parallel and the model is a pure function of seed and data.

mod tree;

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureRow;
use crate::metrics::ConfusionMatrix;
use crate::report::{RunMode, RunReport, SegmentReport};

pub use tree::{Node, Tree};

pub const MODEL_FORMAT: &str = "agewatch-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training rows have no feature columns")]
    NoFeatures,
    #[error("row {index} has {found} features, expected {expected}")]
    FeatureWidthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{rows} rows cannot be split into {k} folds (need k >= 2 and at least k rows)")]
    TooFewRows { rows: usize, k: usize },
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("not an {MODEL_FORMAT} model file")]
    UnknownFormat,
    #[error("model version {found} is not supported (expected {MODEL_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("model expects {model} features, data has {data}")]
    ModelWidthMismatch { model: usize, data: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    Sqrt,
    All,
    Fixed(usize),
}

impl FeaturesPerSplit {
    pub fn count(&self, width: usize) -> usize {
        let k = match *self {
            FeaturesPerSplit::Sqrt => (width as f64).sqrt().floor() as usize,
            FeaturesPerSplit::All => width,
            FeaturesPerSplit::Fixed(k) => k,
        };
        k.clamp(1, width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: FeaturesPerSplit,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
            rng_seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidConfig(
                "max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if self.features_per_split == FeaturesPerSplit::Fixed(0) {
            return Err(ForestError::InvalidConfig("features_per_split must be positive".into()));
        }
        Ok(())
    }

    /// Same config with a different seed.
    pub fn with_seed(&self, rng_seed: u64) -> Self {
        ForestConfig {
            rng_seed,
            ..self.clone()
        }
    }
}

/// SplitMix64 finalizer; decorrelates seeds that differ in a few bits.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, tree_index as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub n_features: usize,
    /// Classes present in the training data, ascending.
    pub classes: Vec<u8>,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

fn check_width(rows: &[FeatureRow]) -> Result<usize, ForestError> {
    let width = rows.first().ok_or(ForestError::EmptyTrainingSet)?.features.len();
    if width == 0 {
        return Err(ForestError::NoFeatures);
    }
    for (index, r) in rows.iter().enumerate() {
        if r.features.len() != width {
            return Err(ForestError::FeatureWidthMismatch {
                index,
                expected: width,
                found: r.features.len(),
            });
        }
    }
    Ok(width)
}

pub fn train(rows: &[FeatureRow], cfg: &ForestConfig) -> Result<ForestModel, ForestError> {
    cfg.validate()?;
    let width = check_width(rows)?;
    let mut classes: Vec<u8> = rows.iter().map(|r| r.label).collect();
    classes.sort_unstable();
    classes.dedup();

    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(cfg.rng_seed, t);
            let sample = tree::bootstrap(rows.len(), &mut rng);
            Tree::grow(rows, sample, width, cfg, &mut rng)
        })
        .collect();

    Ok(ForestModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        n_features: width,
        classes,
        config: cfg.clone(),
        trees,
    })
}

impl ForestModel {
    /// Number of trees voting Aging.
    pub fn aging_votes(&self, features: &[f64]) -> Result<usize, ForestError> {
        if features.len() != self.n_features {
            return Err(ForestError::FeatureWidthMismatch {
                index: 0,
                expected: self.n_features,
                found: features.len(),
            });
        }
        Ok(self.trees.iter().filter(|t| t.predict(features) == 1).count())
    }

    /// Majority vote; a tied vote goes to Aging.
    pub fn predict(&self, features: &[f64]) -> Result<u8, ForestError> {
        let ones = self.aging_votes(features)?;
        Ok(u8::from(2 * ones >= self.trees.len()))
    }

    pub fn predict_rows(&self, rows: &[FeatureRow]) -> Result<Vec<u8>, ForestError> {
        rows.iter().map(|r| self.predict(&r.features)).collect()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<(), ForestError> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    /// Reads a model, rejecting other formats and versions.
    pub fn read_json<R: Read>(reader: R) -> Result<Self, ForestError> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        if value.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
            return Err(ForestError::UnknownFormat);
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_VERSION {
            return Err(ForestError::VersionMismatch { found: version });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a model and checks it against the width of the data it will
    /// score.
    pub fn load(path: impl AsRef<Path>, expected_width: usize) -> Result<Self, ForestError> {
        let model = Self::read_json(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if model.n_features != expected_width {
            return Err(ForestError::ModelWidthMismatch {
                model: model.n_features,
                data: expected_width,
            });
        }
        Ok(model)
    }
}

/// Fold sizes for `n` rows: the first `n % k` folds get one extra row.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|f| n / k + usize::from(f < n % k)).collect()
}

/// k-fold cross-validation over a seeded shuffle, pooling predictions from
/// every held-out fold.
pub fn kfold_evaluate(rows: &[FeatureRow], cfg: &ForestConfig, k: usize) -> Result<RunReport, ForestError> {
    if k < 2 || rows.len() < k {
        return Err(ForestError::TooFewRows { rows: rows.len(), k });
    }
    check_width(rows)?;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, u64::MAX)));

    let mut pooled = ConfusionMatrix::default();
    let mut segments = Vec::with_capacity(k);
    let mut start = 0;
    for (fold, size) in fold_sizes(rows.len(), k).into_iter().enumerate() {
        let test = &order[start..start + size];
        let train_rows: Vec<FeatureRow> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .map(|&i| rows[i].clone())
            .collect();
        let model = train(&train_rows, &cfg.with_seed(mix_seed(cfg.rng_seed, fold as u64)))?;
        let mut cm = ConfusionMatrix::default();
        for &i in test {
            cm.record(model.predict(&rows[i].features)?, rows[i].label);
        }
        pooled.merge(&cm);
        segments.push(SegmentReport::new(start, start + size, cm));
        start += size;
    }
    Ok(RunReport {
        name: format!("{k}-fold"),
        mode: RunMode::KFold,
        instances: rows.len(),
        metrics: crate::metrics::derive(&pooled),
        confusion: pooled,
        forest: cfg.clone(),
        folds: Some(k),
        retrain_window: None,
        detector: None,
        retrain_events: Vec::new(),
        segments,
    })
}
