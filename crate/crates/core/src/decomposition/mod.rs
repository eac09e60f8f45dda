//! Seasonal-trend decomposition by LOESS (STL).
//!
//! Only the trend is consumed downstream (by labeling); the seasonal and
//! residual components are kept for inspection and plotting.

mod loess;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loess::loess_smooth;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("series of length {len} is shorter than two periods of {period}")]
    SeriesTooShort { len: usize, period: usize },
    #[error("period must be at least 2, got {0}")]
    InvalidPeriod(usize),
    #[error("invalid span {span} for {len} points")]
    InvalidSpan { span: usize, len: usize },
    #[error("loess degree must be 0 or 1, got {0}")]
    InvalidDegree(u8),
}

/// STL parameters. Spans left as `None` are derived from the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StlConfig {
    pub seasonal_span: usize,
    pub seasonal_degree: u8,
    pub trend_span: Option<usize>,
    pub trend_degree: u8,
    pub low_pass_span: Option<usize>,
    pub low_pass_degree: u8,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

impl Default for StlConfig {
    fn default() -> Self {
        StlConfig {
            seasonal_span: 7,
            seasonal_degree: 1,
            trend_span: None,
            trend_degree: 1,
            low_pass_span: None,
            low_pass_degree: 1,
            inner_iterations: 2,
            outer_iterations: 1,
        }
    }
}

fn next_odd(x: f64) -> usize {
    let n = x.ceil().max(1.0) as usize;
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

impl StlConfig {
    /// Spans actually used for `period`: (seasonal, trend, low-pass).
    pub fn spans(&self, period: usize) -> (usize, usize, usize) {
        let seasonal = next_odd(self.seasonal_span.max(3) as f64);
        let trend = self.trend_span.map(|s| next_odd(s as f64)).unwrap_or_else(|| {
            next_odd(1.5 * period as f64 / (1.0 - 1.5 / seasonal as f64))
        });
        let low_pass = self
            .low_pass_span
            .map(|s| next_odd(s as f64))
            .unwrap_or_else(|| next_odd(period as f64));
        (seasonal, trend.max(3), low_pass.max(3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub period: usize,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    /// Writes `index,trend,seasonal,residual`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,trend,seasonal,residual")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{i},{},{},{}",
                self.trend[i], self.seasonal[i], self.residual[i]
            )?;
        }
        Ok(())
    }
}

/// Smallest robustness scale, relative to the largest absolute input.
const ROBUSTNESS_SCALE_FLOOR: f64 = 1e-9;

fn moving_average(x: &[f64], len: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut sum: f64 = x[..len].iter().sum();
    let flen = len as f64;
    out.push(sum / flen);
    for k in len..x.len() {
        sum += x[k] - x[k - len];
        out.push(sum / flen);
    }
}

struct Spans {
    period: usize,
    seasonal: usize,
    trend: usize,
    low_pass: usize,
}

/// Smooths each cycle-subseries and extends it one period at both ends.
/// `out` has length `n + 2 * period`; `out[period + i]` aligns with `y[i]`.
fn cycle_subseries(
    y: &[f64],
    spans: &Spans,
    degree: u8,
    robustness: Option<&[f64]>,
    out: &mut [f64],
) {
    let n = y.len();
    let np = spans.period;
    let ns = spans.seasonal;
    let mut sub = Vec::new();
    let mut sub_rw = Vec::new();
    let mut smooth = Vec::new();
    let mut weights = Vec::new();
    for j in 0..np {
        sub.clear();
        sub_rw.clear();
        sub.extend((j..n).step_by(np).map(|i| y[i]));
        if let Some(rw) = robustness {
            sub_rw.extend((j..n).step_by(np).map(|i| rw[i]));
        }
        let rw = robustness.map(|_| sub_rw.as_slice());
        let k = sub.len();
        smooth.clear();
        smooth.resize(k, 0.0);
        loess::smooth_into(&sub, ns, degree, rw, &mut smooth);

        let right = ns.min(k) - 1;
        let before = loess::estimate(&sub, rw, ns, degree, -1.0, 0, right, &mut weights)
            .unwrap_or(smooth[0]);
        let left = k.saturating_sub(ns);
        let after = loess::estimate(&sub, rw, ns, degree, k as f64, left, k - 1, &mut weights)
            .unwrap_or(smooth[k - 1]);

        out[j] = before;
        for (m, v) in smooth.iter().enumerate() {
            out[(m + 1) * np + j] = *v;
        }
        out[(k + 1) * np + j] = after;
    }
}

fn inner_loop(
    y: &[f64],
    spans: &Spans,
    cfg: &StlConfig,
    robustness: Option<&[f64]>,
    seasonal: &mut [f64],
    trend: &mut [f64],
) {
    let n = y.len();
    let np = spans.period;
    let mut detrended = vec![0.0; n];
    let mut cycle = vec![0.0; n + 2 * np];
    let mut ma1 = Vec::with_capacity(n + np);
    let mut ma2 = Vec::with_capacity(n + 2);
    let mut ma3 = Vec::with_capacity(n);
    let mut low_pass = vec![0.0; n];
    let mut deseasoned = vec![0.0; n];

    for _ in 0..cfg.inner_iterations {
        for i in 0..n {
            detrended[i] = y[i] - trend[i];
        }
        cycle_subseries(&detrended, spans, cfg.seasonal_degree, robustness, &mut cycle);

        moving_average(&cycle, np, &mut ma1);
        moving_average(&ma1, np, &mut ma2);
        moving_average(&ma2, 3, &mut ma3);
        loess::smooth_into(&ma3, spans.low_pass, cfg.low_pass_degree, None, &mut low_pass);

        for i in 0..n {
            seasonal[i] = cycle[np + i] - low_pass[i];
            deseasoned[i] = y[i] - seasonal[i];
        }
        loess::smooth_into(&deseasoned, spans.trend, cfg.trend_degree, robustness, trend);
    }
}

/// Bisquare robustness weights from absolute residuals.
fn robustness_weights(y: &[f64], seasonal: &[f64], trend: &[f64]) -> Vec<f64> {
    let abs_res: Vec<f64> = (0..y.len())
        .map(|i| (y[i] - seasonal[i] - trend[i]).abs())
        .collect();
    // residuals at rounding level are not outliers; without the floor an
    // exact fit turns float noise into zero weights
    let floor = ROBUSTNESS_SCALE_FLOOR * y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cmad = 6.0 * crate::ingest::median(&mut abs_res.clone()).max(floor);
    let c9 = 0.999 * cmad;
    let c1 = 0.001 * cmad;
    abs_res
        .into_iter()
        .map(|r| {
            if r <= c1 {
                1.0
            } else if r <= c9 {
                let q = r / cmad;
                (1.0 - q * q).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// Additive STL decomposition with the classic inner/outer loop.
///
/// The residual is `values - trend - seasonal`, so the three components
/// sum back to the input exactly.
pub fn stl_decompose(
    values: &[f64],
    period: usize,
    cfg: &StlConfig,
) -> Result<Decomposition, DecompositionError> {
    if period < 2 {
        return Err(DecompositionError::InvalidPeriod(period));
    }
    if values.len() < 2 * period {
        return Err(DecompositionError::SeriesTooShort {
            len: values.len(),
            period,
        });
    }
    for d in [cfg.seasonal_degree, cfg.trend_degree, cfg.low_pass_degree] {
        if d > 1 {
            return Err(DecompositionError::InvalidDegree(d));
        }
    }
    let (seasonal_span, trend_span, low_pass_span) = cfg.spans(period);
    let spans = Spans {
        period,
        seasonal: seasonal_span,
        trend: trend_span,
        low_pass: low_pass_span,
    };

    let n = values.len();
    let mut seasonal = vec![0.0; n];
    let mut trend = vec![0.0; n];
    inner_loop(values, &spans, cfg, None, &mut seasonal, &mut trend);
    for _ in 0..cfg.outer_iterations {
        let rw = robustness_weights(values, &seasonal, &trend);
        inner_loop(values, &spans, cfg, Some(&rw), &mut seasonal, &mut trend);
    }

    let residual = (0..n).map(|i| values[i] - trend[i] - seasonal[i]).collect();
    Ok(Decomposition {
        trend,
        seasonal,
        residual,
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn default_spans() {
        // 1.5 * 12 / (1 - 1.5 / 7) = 22.9 -> 23
        assert_eq!(StlConfig::default().spans(12), (7, 23, 13));
        assert_eq!(StlConfig::default().spans(720).2, 721);
    }

    #[test]
    fn constant_input() {
        let d = stl_decompose(&[42.0; 120], 12, &StlConfig::default()).unwrap();
        for i in 0..120 {
            assert!((d.trend[i] - 42.0).abs() < 1e-9);
            assert!(d.seasonal[i].abs() < 1e-9);
            assert!(d.residual[i].abs() < 1e-9);
        }
    }

    #[test]
    fn line_input() {
        for (period, n) in [(4, 48), (12, 144), (30, 360), (12, 20_000), (30, 20_000)] {
            let y: Vec<f64> = (0..n).map(|i| 50.0 + 0.37 * i as f64).collect();
            let d = stl_decompose(&y, period, &StlConfig::default()).unwrap();
            for i in period..n - period {
                assert!((d.trend[i] - y[i]).abs() < 1e-3, "period {period} index {i}");
                assert!(d.seasonal[i].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn sinusoid_input() {
        let period = 24;
        let n = period * 10;
        let y: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / period as f64).sin()).collect();
        let d = stl_decompose(&y, period, &StlConfig::default()).unwrap();
        let interior = period..n - period;
        let amp = interior
            .clone()
            .map(|i| d.seasonal[i].abs())
            .fold(0.0f64, f64::max);
        assert!((amp - 1.0).abs() < 0.05, "amplitude {amp}");
        for i in interior {
            assert!(d.trend[i].abs() < 0.05);
            assert!((d.seasonal[i] - y[i]).abs() < 0.05);
        }
    }

    #[test]
    fn additive_identity_is_exact() {
        let y: Vec<f64> = (0..300)
            .map(|i| ((i * 7919) % 101) as f64 * 0.3 + i as f64 * 0.1)
            .collect();
        let d = stl_decompose(&y, 25, &StlConfig::default()).unwrap();
        for i in 0..y.len() {
            assert_eq!(y[i] - d.trend[i] - d.seasonal[i], d.residual[i]);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            stl_decompose(&[1.0; 10], 1, &StlConfig::default()),
            Err(DecompositionError::InvalidPeriod(1))
        );
        assert_eq!(
            stl_decompose(&[1.0; 10], 6, &StlConfig::default()),
            Err(DecompositionError::SeriesTooShort { len: 10, period: 6 })
        );
    }

    #[test]
    fn deterministic() {
        let y: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.37).sin() * 10.0 + i as f64).collect();
        let a = stl_decompose(&y, 20, &StlConfig::default()).unwrap();
        let b = stl_decompose(&y, 20, &StlConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
