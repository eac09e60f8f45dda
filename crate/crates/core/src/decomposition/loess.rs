//! Locally weighted regression with tricube weights.
//!
//! The estimator mirrors the one used inside STL: the neighbourhood is a
//! contiguous run of `span` points, the bandwidth is the distance to the
//! farthest point of that run (widened when the span exceeds the data), and
//! a degree-1 fit falls back to a weighted mean when the local x-spread is
//! negligible relative to the bandwidth.

use super::DecompositionError;

/// Estimate at position `x` from the points `y[lo..=hi]` (positions are the
/// indices themselves). `x` may lie outside the data, which is how STL
/// extrapolates cycle-subseries by one period at each end.
///
/// Returns `None` when every weight in the neighbourhood is zero.
pub(crate) fn estimate(
    y: &[f64],
    robustness: Option<&[f64]>,
    span: usize,
    degree: u8,
    x: f64,
    lo: usize,
    hi: usize,
    weights: &mut Vec<f64>,
) -> Option<f64> {
    let n = y.len();
    let mut h = (x - lo as f64).max(hi as f64 - x);
    if span > n {
        h += ((span - n) / 2) as f64;
    }
    let h9 = 0.999 * h;
    let h1 = 0.001 * h;

    weights.clear();
    let mut total = 0.0;
    for j in lo..=hi {
        let r = (j as f64 - x).abs();
        let mut w = 0.0;
        if r <= h9 {
            w = if r <= h1 {
                1.0
            } else {
                let q = r / h;
                (1.0 - q * q * q).powi(3)
            };
            if let Some(rw) = robustness {
                w *= rw[j];
            }
            total += w;
        }
        weights.push(w);
    }
    if total <= 0.0 {
        return None;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    if h > 0.0 && degree > 0 {
        let centre: f64 = weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * (lo + k) as f64)
            .sum();
        let spread: f64 = weights
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let d = (lo + k) as f64 - centre;
                w * d * d
            })
            .sum();
        if spread.sqrt() > 0.001 * h {
            let b = (x - centre) / spread;
            for (k, w) in weights.iter_mut().enumerate() {
                *w *= b * ((lo + k) as f64 - centre) + 1.0;
            }
        }
    }
    Some(
        weights
            .iter()
            .zip(&y[lo..=hi])
            .map(|(w, v)| w * v)
            .sum(),
    )
}

/// Smooths every point of `y`, writing into `out`. Points whose
/// neighbourhood carries no weight keep their input value.
pub(crate) fn smooth_into(
    y: &[f64],
    span: usize,
    degree: u8,
    robustness: Option<&[f64]>,
    out: &mut [f64],
) {
    let n = y.len();
    debug_assert_eq!(out.len(), n);
    if n == 0 {
        return;
    }
    if n == 1 {
        out[0] = y[0];
        return;
    }
    let mut weights = Vec::with_capacity(span.min(n));
    let half = (span - 1) / 2;
    for i in 0..n {
        let (lo, hi) = if span >= n {
            (0, n - 1)
        } else {
            let lo = i.saturating_sub(half).min(n - span);
            (lo, lo + span - 1)
        };
        out[i] = estimate(y, robustness, span, degree, i as f64, lo, hi, &mut weights)
            .unwrap_or(y[i]);
    }
}

/// LOESS smoother over equally spaced points.
///
/// `span` must be odd, at most `values.len()`, and at least `degree + 1`;
/// `degree` is 0 (local mean) or 1 (local line).
pub fn loess_smooth(values: &[f64], span: usize, degree: u8) -> Result<Vec<f64>, DecompositionError> {
    if degree > 1 {
        return Err(DecompositionError::InvalidDegree(degree));
    }
    if span % 2 == 0 || span > values.len() || span < degree as usize + 1 {
        return Err(DecompositionError::InvalidSpan {
            span,
            len: values.len(),
        });
    }
    let mut out = vec![0.0; values.len()];
    smooth_into(values, span, degree, None, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct weighted least squares at index `i`, built from the textbook
    /// normal equations rather than the centred-weight shortcut above.
    fn wls_oracle(y: &[f64], span: usize, i: usize) -> f64 {
        let n = y.len();
        let lo = i.saturating_sub((span - 1) / 2).min(n - span);
        let hi = lo + span - 1;
        let h = (i - lo).max(hi - i) as f64;
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in lo..=hi {
            let d = (j as f64 - i as f64).abs();
            let w = if d >= 0.999 * h {
                0.0
            } else {
                (1.0 - (d / h).powi(3)).powi(3)
            };
            let x = j as f64;
            s0 += w;
            s1 += w * x;
            s2 += w * x * x;
            t0 += w * y[j];
            t1 += w * x * y[j];
        }
        let det = s0 * s2 - s1 * s1;
        if det.abs() < 1e-12 * s0 * s0 {
            // a single point carries all the weight
            return t0 / s0;
        }
        let slope = (s0 * t1 - s1 * t0) / det;
        let intercept = (t0 - slope * s1) / s0;
        intercept + slope * i as f64
    }

    #[test]
    fn constant_is_preserved() {
        for span in [1, 3, 7, 21] {
            for degree in 0..=1 {
                if span < degree as usize + 1 {
                    continue;
                }
                let out = loess_smooth(&[4.25; 30], span, degree).unwrap();
                assert!(out.iter().all(|v| (v - 4.25).abs() < 1e-12), "{span} {degree}");
            }
        }
    }

    #[test]
    fn line_is_reproduced() {
        let line: Vec<f64> = (0..50).map(|i| 3.0 - 0.7 * i as f64).collect();
        for span in [3, 5, 11, 49] {
            let out = loess_smooth(&line, span, 1).unwrap();
            for (a, b) in out.iter().zip(&line) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn impulse_matches_direct_wls() {
        let mut y = vec![0.0; 15];
        y[7] = 1.0;
        let out = loess_smooth(&y, 5, 1).unwrap();
        for i in 0..y.len() {
            let expected = wls_oracle(&y, 5, i);
            assert!((out[i] - expected).abs() < 1e-12, "index {i}: {} vs {expected}", out[i]);
        }
    }

    #[test]
    fn invalid_spans() {
        let y = [0.0; 10];
        assert!(loess_smooth(&y, 4, 1).is_err());
        assert!(loess_smooth(&y, 11, 1).is_err());
        assert!(loess_smooth(&y, 1, 1).is_err());
        assert!(loess_smooth(&y, 3, 2).is_err());
    }

    proptest! {
        #[test]
        fn random_data_matches_direct_wls(
            y in proptest::collection::vec(-100.0f64..100.0, 9..40),
            half in 1usize..4,
        ) {
            let span = 2 * half + 1;
            let out = loess_smooth(&y, span, 1).unwrap();
            for i in 0..y.len() {
                prop_assert!((out[i] - wls_oracle(&y, span, i)).abs() < 1e-8);
            }
        }

        #[test]
        fn linear_input_unchanged(a in -1e3f64..1e3, b in -10.0f64..10.0, n in 5usize..80, half in 1usize..3) {
            let y: Vec<f64> = (0..n).map(|i| a + b * i as f64).collect();
            let out = loess_smooth(&y, 2 * half + 1, 1).unwrap();
            for (o, v) in out.iter().zip(&y) {
                prop_assert!((o - v).abs() < 1e-9);
            }
        }
    }
}
