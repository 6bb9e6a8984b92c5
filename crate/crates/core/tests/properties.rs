use invfilter::forward::{normalize_log_weights, systematic_resample_with_offset};
use invfilter::model::{GaussianDist, ObservationDensity};
use invfilter::rng::{Purpose, RngStream};
use invfilter::scenarios::{bearing_model, ungm_model, BearingParams, SensorTrack, UngmParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against the CDF
/// obtained by integrating `exp(log_density)` on a fine grid.
fn ks_against_density(mut samples: Vec<f64>, lo: f64, hi: f64, log_density: impl Fn(f64) -> f64) -> f64 {
    let n_grid = 40_001;
    let h = (hi - lo) / (n_grid - 1) as f64;
    let pdf: Vec<f64> = (0..n_grid).map(|i| log_density(lo + i as f64 * h).exp()).collect();
    let mut cdf = vec![0.0; n_grid];
    for i in 1..n_grid {
        cdf[i] = cdf[i - 1] + 0.5 * h * (pdf[i - 1] + pdf[i]);
    }
    let total = cdf[n_grid - 1];
    let eval = |x: f64| {
        let t = ((x - lo) / h).clamp(0.0, (n_grid - 1) as f64);
        let i = (t.floor() as usize).min(n_grid - 2);
        let f = t - i as f64;
        (cdf[i] * (1.0 - f) + cdf[i + 1] * f) / total
    };
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = eval(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

// critical value at alpha = 0.001 is about 1.95 / sqrt(n)
const KS_N: usize = 4000;

fn ks_critical() -> f64 {
    1.95 / (KS_N as f64).sqrt()
}

#[test]
fn ungm_defender_sampler_matches_density() {
    let m = ungm_model(&UngmParams::default(), GaussianDist::scalar(0.0, 5.0).unwrap()).unwrap();
    let stream = RngStream::new(101).run(0);
    let xhat = DVector::from_element(1, 7.5);
    let samples: Vec<f64> = (0..KS_N)
        .map(|i| m.defender_obs.sample(&xhat, 3, &mut stream.rng(3, i, Purpose::DefenderObs)).unwrap()[0])
        .collect();
    let d = ks_against_density(samples, -20.0, 40.0, |a| {
        m.defender_obs.log_density(&DVector::from_element(1, a), &xhat, 3).unwrap()
    });
    assert!(d < ks_critical(), "KS {d}");
}

#[test]
fn bearing_attacker_sampler_matches_density() {
    let p = BearingParams::default();
    let track = SensorTrack::nominal(&p, 25);
    let m = bearing_model(&p, track, GaussianDist::new(DVector::from_vec(vec![80.0, 1.0]), DMatrix::identity(2, 2)).unwrap()).unwrap();
    let stream = RngStream::new(102).run(0);
    let x = DVector::from_vec(vec![70.0, 1.0]);
    let k = 5;
    let samples: Vec<f64> = (0..KS_N)
        .map(|i| m.attacker_obs.sample(&x, k, &mut stream.rng(k, i, Purpose::AttackerObs)).unwrap()[0])
        .collect();
    let mid = samples.iter().sum::<f64>() / samples.len() as f64;
    let d = ks_against_density(samples, mid - 0.5, mid + 0.5, |y| {
        m.attacker_obs.log_density(&DVector::from_element(1, y), &x, k).unwrap()
    });
    assert!(d < ks_critical(), "KS {d}");
}

proptest! {
    #[test]
    fn systematic_resampling_keeps_count_and_support(
        raw in prop::collection::vec(0.0f64..1.0, 1..40),
        u in 0.0f64..1.0,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let idx = systematic_resample_with_offset(&w, u);
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        for &i in &idx {
            prop_assert!(w[i] > 0.0);
        }
    }

    #[test]
    fn log_weight_normalization_is_shift_invariant(
        logw in prop::collection::vec(-50.0f64..50.0, 1..30),
        shift in -500.0f64..500.0,
    ) {
        let a = normalize_log_weights(&logw, 1).unwrap();
        let shifted: Vec<f64> = logw.iter().map(|x| x + shift).collect();
        let b = normalize_log_weights(&shifted, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
