use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::linalg::{self, all_finite_mat, all_finite_vec};
use crate::model::{AdditiveGaussianObservation, AdditiveGaussianTransition, SystemModel};

/// Mean and covariance carried by an extended Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl EkfState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }
}

/// One attacker EKF recursion on `model`, consuming the observation `y_k`.
///
/// `k ≥ 1` is the time index of `y`; the prediction uses the transition at
/// `k − 1`. The covariance update is in Joseph form.
pub fn ekf_step(model: &SystemModel, state: &EkfState, y: &DVector<f64>, k: usize) -> Result<EkfState> {
    ekf_update(&model.transition, &model.attacker_obs, state, y, k)
}

/// [`ekf_step`] on an explicit transition/observation pair.
pub fn ekf_update(
    transition: &AdditiveGaussianTransition,
    observation: &AdditiveGaussianObservation,
    state: &EkfState,
    y: &DVector<f64>,
    k: usize,
) -> Result<EkfState> {
    let prev = k.saturating_sub(1);
    let f = transition.jacobian(&state.mean, prev)?;
    let mean_pred = transition.drift(&state.mean, prev)?;
    let cov_pred = linalg::symmetrize(&(&f * &state.cov * f.transpose() + transition.noise_cov()));
    kalman_correct(observation, &mean_pred, &cov_pred, y, k)
}

/// Measurement correction of a Gaussian prior `(mean, cov)` with
/// observation `z` at time `k`.
pub fn kalman_correct(
    observation: &AdditiveGaussianObservation,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    z: &DVector<f64>,
    k: usize,
) -> Result<EkfState> {
    let h = observation.jacobian(mean, k)?;
    let r = observation.noise_cov();
    let innovation = z - observation.predict(mean, k)?;
    let s = linalg::symmetrize(&(&h * cov * h.transpose() + r));
    let s_inv = linalg::inverse(&s, "innovation covariance")?;
    let gain = cov * h.transpose() * s_inv;
    let mean_post = mean + &gain * innovation;
    let n = mean.len();
    let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &h;
    let cov_post = linalg::symmetrize(&(&i_kh * cov * i_kh.transpose() + &gain * r * gain.transpose()));
    if !all_finite_vec(&mean_post) || !all_finite_mat(&cov_post) {
        return Err(FilterError::NonFinite {
            context: "EKF update",
            time: k,
        });
    }
    Ok(EkfState {
        mean: mean_post,
        cov: cov_post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianDist;
    use crate::scenarios::{linear_model, ungm_model, LinearParams, UngmParams};
    use proptest::prelude::*;

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn random_walk() -> SystemModel {
        let p = LinearParams {
            transition: 1.0,
            ..LinearParams::default()
        };
        linear_model(&p, GaussianDist::scalar(0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn scalar_kalman_arithmetic() {
        let m = random_walk();
        let out = ekf_step(&m, &EkfState::new(s(0.0), DMatrix::from_element(1, 1, 1.0)), &s(2.0), 1).unwrap();
        assert!((out.mean[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((out.cov[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_predicted_mean() {
        let m = ungm_model(&UngmParams::default(), GaussianDist::scalar(0.0, 5.0).unwrap()).unwrap();
        let state = EkfState::new(s(1.7), DMatrix::from_element(1, 1, 2.0));
        let pred = m.transition.drift(&state.mean, 3).unwrap();
        let y = m.attacker_obs.predict(&pred, 4).unwrap();
        let out = ekf_step(&m, &state, &y, 4).unwrap();
        assert_eq!(out.mean, pred);
    }

    #[test]
    fn ungm_single_step_matches_symbolic_jacobian_oracle() {
        // From (m, P) = (0, 5), drift at time 0 and y = 1:
        //   m⁻ = 8, F(0) = 25.5, P⁻ = 25.5²·5 + 10 = 3261.25
        //   H(8) = 0.8, S = 0.64·3261.25 + 1, K = 0.8·3261.25/S
        //   m = 8 + K (1 − 3.2), P = (1 − 0.8K)² P⁻ + K²
        let m = ungm_model(&UngmParams::default(), GaussianDist::scalar(0.0, 5.0).unwrap()).unwrap();
        let out = ekf_step(&m, &EkfState::new(s(0.0), DMatrix::from_element(1, 1, 5.0)), &s(1.0), 1).unwrap();
        let pp = 25.5f64 * 25.5 * 5.0 + 10.0;
        let sv = 0.64 * pp + 1.0;
        let k = 0.8 * pp / sv;
        let mean = 8.0 + k * (1.0 - 3.2);
        let cov = (1.0 - 0.8 * k).powi(2) * pp + k * k;
        assert!((out.mean[0] - mean).abs() < 1e-12, "{} vs {}", out.mean[0], mean);
        assert!((out.cov[(0, 0)] - cov).abs() < 1e-12 * cov.max(1.0));
    }

    #[test]
    fn singular_innovation_is_an_error() {
        use crate::model::GaussianNoise;
        let m = random_walk();
        let obs = m.attacker_obs.clone().with_noise(GaussianNoise::scalar(0.0).unwrap()).unwrap();
        let err = kalman_correct(&obs, &s(0.0), &DMatrix::zeros(1, 1), &s(1.0), 1).unwrap_err();
        assert!(matches!(err, FilterError::Singular { .. }));
    }

    /// Textbook Kalman filter on `x' = a x + w`, `y = x + v`.
    fn kf_oracle(a: f64, q: f64, r: f64, m: f64, p: f64, y: f64) -> (f64, f64) {
        let mp = a * m;
        let pp = a * a * p + q;
        let k = pp / (pp + r);
        (mp + k * (y - mp), (1.0 - k) * pp)
    }

    proptest! {
        #[test]
        fn ekf_equals_kalman_on_linear_models(
            a in -1.5f64..1.5, q in 0.01f64..5.0, r in 0.01f64..5.0,
            m in -10.0f64..10.0, p in 0.01f64..10.0,
            ys in prop::collection::vec(-10.0f64..10.0, 1..15),
        ) {
            let params = LinearParams { transition: a, process_var: q, attacker_obs_var: r, defender_obs_var: 1.0 };
            let model = linear_model(&params, GaussianDist::scalar(0.0, 1.0).unwrap()).unwrap();
            let mut state = EkfState::new(s(m), DMatrix::from_element(1, 1, p));
            let (mut om, mut op) = (m, p);
            for (i, &y) in ys.iter().enumerate() {
                state = ekf_step(&model, &state, &s(y), i + 1).unwrap();
                let next = kf_oracle(a, q, r, om, op, y);
                om = next.0; op = next.1;
                prop_assert!((state.mean[0] - om).abs() < 1e-10 * om.abs().max(1.0));
                prop_assert!((state.cov[(0, 0)] - op).abs() < 1e-10 * op.max(1.0));
                prop_assert!(state.cov[(0, 0)] >= 0.0);
            }
        }
    }

    #[test]
    fn bearing_covariance_stays_symmetric_psd() {
        use crate::scenarios::{bearing_model, BearingParams, SensorTrack};
        let p = BearingParams::default();
        let init = GaussianDist::new(DVector::from_vec(vec![80.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let m = bearing_model(&p, SensorTrack::nominal(&p, 20), init).unwrap();
        let mut state = EkfState::new(
            DVector::from_vec(vec![83.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[16.0, 0.0, 0.0, 1.0]),
        );
        for k in 1..=20 {
            let truth = DVector::from_vec(vec![80.0 + k as f64, 1.0]);
            let y = m.attacker_obs.predict(&truth, k).unwrap();
            state = ekf_step(&m, &state, &y, k).unwrap();
            assert!(linalg::is_symmetric(&state.cov, 1e-12));
            let eig = state.cov.clone().symmetric_eigen().eigenvalues;
            assert!(eig.iter().all(|&e| e >= -1e-10 * state.cov.norm()));
        }
    }
}
