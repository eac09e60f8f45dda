use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::DetectorError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdwinConfig {
    pub delta: f64,
    /// Buckets kept per level before the two oldest are merged.
    pub max_buckets: usize,
}

impl Default for AdwinConfig {
    fn default() -> Self {
        AdwinConfig {
            delta: 0.002,
            max_buckets: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bucket {
    pub sum: f64,
    /// Sum of squared deviations from the bucket mean.
    pub variance: f64,
    pub count: u64,
}

impl Bucket {
    fn merge(older: Bucket, newer: Bucket) -> Bucket {
        let (n1, n2) = (older.count as f64, newer.count as f64);
        let d = older.sum / n1 - newer.sum / n2;
        Bucket {
            sum: older.sum + newer.sum,
            variance: older.variance + newer.variance + n1 * n2 / (n1 + n2) * d * d,
            count: older.count + newer.count,
        }
    }
}

/// ADWIN2 adaptive window over values in [0, 1].
///
/// `levels[k]` holds buckets of `2^k` elements, oldest at the front; the
/// oldest data overall sits in the highest non-empty level.
#[derive(Debug, Clone, PartialEq)]
pub struct AdwinState {
    pub config: AdwinConfig,
    pub levels: Vec<VecDeque<Bucket>>,
    pub total_count: u64,
    pub total_sum: f64,
    pub total_variance: f64,
}

impl Default for AdwinState {
    fn default() -> Self {
        Self::new(AdwinConfig::default())
    }
}

/// Hoeffding cut threshold for sub-windows of `n0` and `n1` elements.
pub fn epsilon_cut(n0: f64, n1: f64, delta_prime: f64) -> f64 {
    let m = 1.0 / (1.0 / n0 + 1.0 / n1);
    ((4.0 / delta_prime).ln() / (2.0 * m)).sqrt()
}

impl AdwinState {
    pub fn new(config: AdwinConfig) -> Self {
        AdwinState {
            config,
            levels: Vec::new(),
            total_count: 0,
            total_sum: 0.0,
            total_variance: 0.0,
        }
    }

    pub fn width(&self) -> u64 {
        self.total_count
    }

    pub fn mean(&self) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.total_sum / self.total_count as f64
        }
    }

    /// Buckets from oldest to newest.
    pub fn buckets(&self) -> impl Iterator<Item = &Bucket> {
        self.levels.iter().rev().flat_map(|l| l.iter())
    }

    pub fn bucket_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    /// Inserts a value and cuts the window while any bucket boundary splits
    /// it into sub-windows with significantly different means.
    pub fn update(&mut self, value: f64) -> Result<bool, DetectorError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(DetectorError::ValueOutOfRange(value));
        }
        self.insert(value);
        let mut changed = false;
        while self.find_cut() {
            self.drop_oldest();
            changed = true;
        }
        Ok(changed)
    }

    fn insert(&mut self, value: f64) {
        let mean = self.mean();
        if self.total_count > 0 {
            let n = self.total_count as f64;
            self.total_variance += n / (n + 1.0) * (value - mean) * (value - mean);
        }
        self.total_count += 1;
        self.total_sum += value;
        if self.levels.is_empty() {
            self.levels.push(VecDeque::new());
        }
        self.levels[0].push_back(Bucket {
            sum: value,
            variance: 0.0,
            count: 1,
        });
        let mut level = 0;
        while self.levels[level].len() > self.config.max_buckets {
            let older = self.levels[level].pop_front().expect("over capacity");
            let newer = self.levels[level].pop_front().expect("over capacity");
            if self.levels.len() == level + 1 {
                self.levels.push(VecDeque::new());
            }
            self.levels[level + 1].push_back(Bucket::merge(older, newer));
            level += 1;
        }
    }

    fn find_cut(&self) -> bool {
        let cuts = self.bucket_count().saturating_sub(1);
        if cuts == 0 {
            return false;
        }
        let delta_prime = self.config.delta / cuts as f64;
        let total = self.total_count as f64;
        let mut n0 = 0.0;
        let mut s0 = 0.0;
        for b in self.buckets().take(cuts) {
            n0 += b.count as f64;
            s0 += b.sum;
            let n1 = total - n0;
            let diff = (s0 / n0 - (self.total_sum - s0) / n1).abs();
            if diff >= epsilon_cut(n0, n1, delta_prime) {
                return true;
            }
        }
        false
    }

    fn drop_oldest(&mut self) {
        let level = self.levels.iter().rposition(|l| !l.is_empty()).expect("non-empty window");
        let b = self.levels[level].pop_front().expect("non-empty level");
        let n = self.total_count as f64;
        let nb = b.count as f64;
        let mean_b = b.sum / nb;
        let mean_rest = (self.total_sum - b.sum) / (n - nb);
        self.total_count -= b.count;
        self.total_sum -= b.sum;
        self.total_variance -= b.variance + nb * (n - nb) / n * (mean_b - mean_rest) * (mean_b - mean_rest);
        if self.total_count == 0 {
            self.total_sum = 0.0;
            self.total_variance = 0.0;
        }
        self.total_variance = self.total_variance.max(0.0);
        while self.levels.last().is_some_and(|l| l.is_empty()) {
            self.levels.pop();
        }
    }

    pub fn reset(&mut self) {
        *self = AdwinState::new(self.config.clone());
    }
}
