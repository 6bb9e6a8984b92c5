//! Resampling schemes and log-space weight normalization.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{FilterError, Result};

/// Which resampling scheme to apply after weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    /// One uniform offset, equally spaced positions.
    #[default]
    Systematic,
    /// `N` independent categorical draws.
    Multinomial,
}

impl ResamplingScheme {
    pub fn resample(self, weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize> {
        match self {
            ResamplingScheme::Systematic => systematic_resample(weights, rng),
            ResamplingScheme::Multinomial => multinomial_resample(weights, rng),
        }
    }
}

/// Systematic resampling with a random offset `u ~ U[0,1)`.
pub fn systematic_resample(weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize> {
    let u: f64 = rng.random();
    systematic_resample_with_offset(weights, u)
}

/// Positions `(j + u)/N`; position `j` selects the particle whose cumulative
/// weight interval contains it.
pub fn systematic_resample_with_offset(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut indices = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    // rounding can leave the cumulative sum just below 1; never step past the
    // last particle with positive weight
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1);
    cumulative += weights[0];
    for j in 0..n {
        let position = (j as f64 + u) / n as f64;
        while position >= cumulative && i < last {
            i += 1;
            cumulative += weights[i];
        }
        indices.push(i);
    }
    indices
}

/// `N` i.i.d. draws from the categorical distribution given by `weights`.
pub fn multinomial_resample(weights: &[f64], rng: &mut dyn RngCore) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    (0..weights.len())
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}

/// Normalize log-weights by max subtraction. Errors with
/// [`FilterError::ZeroLikelihood`] when every log-weight is `-∞` or any is NaN.
pub fn normalize_log_weights(log_weights: &[f64], time: usize) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_weights.iter().any(|w| w.is_nan()) {
        return Err(FilterError::ZeroLikelihood { time });
    }
    let unnormalized: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = unnormalized.iter().sum();
    Ok(unnormalized.into_iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream};
    use proptest::prelude::*;

    #[test]
    fn point_mass_selects_one_particle() {
        assert_eq!(systematic_resample_with_offset(&[1.0, 0.0, 0.0, 0.0], 0.9), vec![0; 4]);
        let mut rng = RngStream::new(1).run(0).rng(0, 0, Purpose::ForwardResample);
        assert_eq!(multinomial_resample(&[0.0, 0.0, 1.0], &mut rng), vec![2; 3]);
    }

    #[test]
    fn half_half_with_quarter_offset() {
        assert_eq!(systematic_resample_with_offset(&[0.5, 0.5], 0.25), vec![0, 1]);
    }

    #[test]
    fn uniform_with_zero_offset_is_identity() {
        let w = vec![0.125; 8];
        assert_eq!(systematic_resample_with_offset(&w, 0.0), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn trailing_zero_weights_are_never_selected() {
        let idx = systematic_resample_with_offset(&[0.3, 0.7, 0.0, 0.0], 0.999_999);
        assert!(idx.iter().all(|&i| i < 2));
    }

    #[test]
    fn log_normalization() {
        let w = normalize_log_weights(&[1f64.ln(), 3f64.ln()], 1).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-14 && (w[1] - 0.75).abs() < 1e-14);
        // far below f64 underflow in linear space
        let w = normalize_log_weights(&[-2000.0, -2000.0 + 3f64.ln()], 1).unwrap();
        assert!((w[1] - 0.75).abs() < 1e-12);
        assert_eq!(
            normalize_log_weights(&[f64::NEG_INFINITY; 3], 4),
            Err(FilterError::ZeroLikelihood { time: 4 })
        );
    }

    #[test]
    fn systematic_counts_are_unbiased() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let stream = RngStream::new(2024).run(0);
        let trials = 100_000;
        let mut counts = [0u64; 4];
        for t in 0..trials {
            let mut rng = stream.rng(t, 0, Purpose::ForwardResample);
            for i in systematic_resample(&w, &mut rng) {
                counts[i] += 1;
            }
        }
        for i in 0..4 {
            let mean = counts[i] as f64 / trials as f64;
            let expected = 4.0 * w[i];
            assert!((mean - expected).abs() < 0.01 * expected, "particle {i}: {mean} vs {expected}");
        }
    }

    #[test]
    fn multinomial_counts_are_unbiased() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let stream = RngStream::new(77).run(0);
        let trials = 100_000;
        let mut counts = [0u64; 4];
        for t in 0..trials {
            let mut rng = stream.rng(t, 0, Purpose::InverseResample);
            for i in multinomial_resample(&w, &mut rng) {
                counts[i] += 1;
            }
        }
        for i in 0..4 {
            let mean = counts[i] as f64 / trials as f64;
            let expected = 4.0 * w[i];
            assert!((mean - expected).abs() < 0.01 * expected, "particle {i}: {mean} vs {expected}");
        }
    }

    proptest! {
        #[test]
        fn systematic_counts_within_one_of_expectation(
            raw in prop::collection::vec(0.0f64..1.0, 1..40),
            u in 0.0f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let n = w.len();
            let idx = systematic_resample_with_offset(&w, u);
            prop_assert_eq!(idx.len(), n);
            let mut counts = vec![0usize; n];
            for i in idx { counts[i] += 1; }
            for i in 0..n {
                prop_assert!((counts[i] as f64 - n as f64 * w[i]).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn normalized_weights_sum_to_one(logw in prop::collection::vec(-800.0f64..50.0, 1..60)) {
            let w = normalize_log_weights(&logw, 0).unwrap();
            let s: f64 = w.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
        }
    }
}
