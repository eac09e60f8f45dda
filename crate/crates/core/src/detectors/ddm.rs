use serde::{Deserialize, Serialize};

use super::Phase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdmConfig {
    pub min_num_instances: u64,
    pub warning_level: f64,
    pub drift_level: f64,
}

impl Default for DdmConfig {
    fn default() -> Self {
        DdmConfig {
            min_num_instances: 30,
            warning_level: 2.0,
            drift_level: 3.0,
        }
    }
}

/// Drift Detection Method over a 0/1 error stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DdmState {
    pub config: DdmConfig,
    pub n: u64,
    pub p: f64,
    pub s: f64,
    pub p_min: f64,
    pub s_min: f64,
    pub phase: Phase,
}

impl Default for DdmState {
    fn default() -> Self {
        Self::new(DdmConfig::default())
    }
}

impl DdmState {
    pub fn new(config: DdmConfig) -> Self {
        DdmState {
            config,
            n: 0,
            p: 0.0,
            s: 0.0,
            p_min: f64::INFINITY,
            s_min: f64::INFINITY,
            phase: Phase::InControl,
        }
    }

    pub fn update(&mut self, error: bool) -> Phase {
        self.n += 1;
        let n = self.n as f64;
        self.p += (f64::from(u8::from(error)) - self.p) / n;
        self.s = (self.p * (1.0 - self.p) / n).sqrt();
        self.phase = Phase::InControl;
        if self.n < self.config.min_num_instances {
            return self.phase;
        }
        if self.p + self.s < self.p_min + self.s_min {
            self.p_min = self.p;
            self.s_min = self.s;
        }
        let level = self.p + self.s;
        if level > self.p_min + self.config.drift_level * self.s_min {
            self.phase = Phase::Drift;
        } else if level > self.p_min + self.config.warning_level * self.s_min {
            self.phase = Phase::Warning;
        }
        self.phase
    }

    pub fn reset(&mut self) {
        *self = DdmState::new(self.config.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_stream_stays_in_control() {
        let mut d = DdmState::default();
        for i in 0..10_000 {
            assert_eq!(d.update(false), Phase::InControl);
            if i + 1 >= 30 {
                assert_eq!((d.p_min, d.s_min), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn guard_before_min_instances() {
        let mut d = DdmState::default();
        for i in 0..29 {
            assert_eq!(d.update(i % 3 != 0), Phase::InControl);
        }
        assert!(d.p_min.is_infinite());
    }

    #[test]
    fn running_rate_matches_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = DdmState::default();
        let mut ones = 0;
        for i in 1..=500u64 {
            let e = rng.random_bool(0.3);
            ones += u64::from(e);
            d.update(e);
            let p = ones as f64 / i as f64;
            assert!((d.p - p).abs() < 1e-12);
            assert!((d.s - (p * (1.0 - p) / i as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_behaviour() {
        let mut d = DdmState::default();
        for i in 0..200 {
            d.update(i % 2 == 0);
        }
        d.reset();
        assert_eq!(d, DdmState::default());
        d.reset();
        assert_eq!(d, DdmState::default());
        for _ in 0..100 {
            assert_eq!(d.update(false), Phase::InControl);
        }
        assert_eq!(d.p_min, 0.0);
    }

    #[test]
    fn step_change_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut d = DdmState::default();
        for _ in 0..1000 {
            d.update(rng.random_bool(0.1));
        }
        let hit = (0..500).find(|_| d.update(rng.random_bool(0.5)) == Phase::Drift);
        assert!(hit.is_some());
    }
}
