//! Concrete models used by the experiments: the univariate nonlinear growth
//! model, bearing-only tracking with a moving sensor, and a scalar
//! linear-Gaussian system used as an exact oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    AdditiveGaussianObservation, AdditiveGaussianTransition, GaussianDist, GaussianNoise, SystemModel,
};
use crate::rng::{Purpose, RunStream};

/// Parameters of the univariate nonlinear growth model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UngmParams {
    pub process_var: f64,
    pub attacker_obs_var: f64,
    pub defender_obs_var: f64,
}

impl Default for UngmParams {
    fn default() -> Self {
        Self {
            process_var: 10.0,
            attacker_obs_var: 1.0,
            defender_obs_var: 5.0,
        }
    }
}

/// `x/2 + 25x/(1+x²) + 8cos(1.2k)`.
pub fn ungm_drift(x: f64, k: usize) -> f64 {
    x / 2.0 + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * k as f64).cos()
}

pub fn ungm_drift_derivative(x: f64) -> f64 {
    let d = 1.0 + x * x;
    0.5 + 25.0 * (1.0 - x * x) / (d * d)
}

pub fn ungm_model(params: &UngmParams, initial: GaussianDist) -> Result<SystemModel> {
    let transition = AdditiveGaussianTransition::new(
        1,
        Arc::new(|x, k| DVector::from_element(1, ungm_drift(x[0], k))),
        GaussianNoise::scalar(params.process_var)?,
    )?
    .with_jacobian(Arc::new(|x, _| DMatrix::from_element(1, 1, ungm_drift_derivative(x[0]))));
    let attacker = AdditiveGaussianObservation::new(
        1,
        Arc::new(|x, _| DVector::from_element(1, x[0] * x[0] / 20.0)),
        GaussianNoise::scalar(params.attacker_obs_var)?,
    )
    .with_jacobian(Arc::new(|x, _| DMatrix::from_element(1, 1, x[0] / 10.0)));
    let defender = AdditiveGaussianObservation::new(
        1,
        Arc::new(|x, _| DVector::from_element(1, x[0] * x[0] / 10.0)),
        GaussianNoise::scalar(params.defender_obs_var)?,
    )
    .with_jacobian(Arc::new(|x, _| DMatrix::from_element(1, 1, x[0] / 5.0)));
    SystemModel::new(transition, attacker, defender, initial)
}

/// Parameters of the bearing-only tracking model. Angles are in degrees here
/// and converted to radians when the model is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BearingParams {
    pub dt: f64,
    pub process_var: f64,
    pub attacker_noise_deg: f64,
    pub defender_noise_deg: f64,
    pub sensor_speed: f64,
    pub sensor_altitude: f64,
    pub sensor_jitter_var: f64,
}

impl Default for BearingParams {
    fn default() -> Self {
        Self {
            dt: 1.0,
            process_var: 0.01,
            attacker_noise_deg: 3.0,
            defender_noise_deg: 5.0,
            sensor_speed: 4.0,
            sensor_altitude: 20.0,
            sensor_jitter_var: 1.0,
        }
    }
}

/// Variance in rad² of a zero-mean angle with standard deviation `deg` degrees.
pub fn degrees_std_to_rad_var(deg: f64) -> f64 {
    let rad = deg.to_radians();
    rad * rad
}

/// Sensor positions `(sˣ_k, sʸ_k)` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrack {
    positions: Vec<[f64; 2]>,
    speed: f64,
    altitude: f64,
}

impl SensorTrack {
    /// Unperturbed track `(speed·k, altitude)`.
    pub fn nominal(params: &BearingParams, horizon: usize) -> Self {
        Self {
            positions: (0..=horizon)
                .map(|k| [params.sensor_speed * k as f64, params.sensor_altitude])
                .collect(),
            speed: params.sensor_speed,
            altitude: params.sensor_altitude,
        }
    }

    /// Track with i.i.d. Gaussian jitter on both coordinates, drawn from the
    /// run's sensor substream.
    pub fn sample(params: &BearingParams, horizon: usize, stream: &RunStream) -> Self {
        let sd = params.sensor_jitter_var.sqrt();
        let mut track = Self::nominal(params, horizon);
        for (k, pos) in track.positions.iter_mut().enumerate() {
            let mut rng = stream.rng(k, 0, Purpose::SensorJitter);
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            pos[0] += sd * dx;
            pos[1] += sd * dy;
        }
        track
    }

    pub fn at(&self, k: usize) -> [f64; 2] {
        self.positions
            .get(k)
            .copied()
            .unwrap_or([self.speed * k as f64, self.altitude])
    }
}

/// Bearing from the sensor to a target at position `p` on the x-axis.
pub fn bearing(p: f64, sensor: [f64; 2]) -> f64 {
    sensor[1].atan2(p - sensor[0])
}

fn bearing_observation(track: Arc<SensorTrack>, var: f64) -> Result<AdditiveGaussianObservation> {
    let map_track = Arc::clone(&track);
    Ok(AdditiveGaussianObservation::new(
        2,
        Arc::new(move |x, k| DVector::from_element(1, bearing(x[0], map_track.at(k)))),
        GaussianNoise::scalar(var)?,
    )
    .with_jacobian(Arc::new(move |x, k| {
        let s = track.at(k);
        let dx = x[0] - s[0];
        DMatrix::from_row_slice(1, 2, &[-s[1] / (dx * dx + s[1] * s[1]), 0.0])
    })))
}

/// Constant-velocity target observed in bearing by a moving sensor.
pub fn bearing_model(params: &BearingParams, track: SensorTrack, initial: GaussianDist) -> Result<SystemModel> {
    let dt = params.dt;
    let f = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let f_drift = f.clone();
    let gain = DMatrix::from_column_slice(2, 1, &[dt * dt / 2.0, dt]);
    let transition = AdditiveGaussianTransition::new(
        2,
        Arc::new(move |x, _| &f_drift * x),
        GaussianNoise::with_gain(gain, DMatrix::from_element(1, 1, params.process_var))?,
    )?
    .with_jacobian(Arc::new(move |_, _| f.clone()));
    let track = Arc::new(track);
    let attacker = bearing_observation(
        Arc::clone(&track),
        degrees_std_to_rad_var(params.attacker_noise_deg),
    )?;
    let defender = bearing_observation(track, degrees_std_to_rad_var(params.defender_noise_deg))?;
    SystemModel::new(transition, attacker, defender, initial)
}

/// Scalar linear-Gaussian system `x' = a x + w`, `y = x + v`, `a_k = x̂ + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub transition: f64,
    pub process_var: f64,
    pub attacker_obs_var: f64,
    pub defender_obs_var: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            transition: 0.9,
            process_var: 1.0,
            attacker_obs_var: 1.0,
            defender_obs_var: 1.0,
        }
    }
}

pub fn linear_model(params: &LinearParams, initial: GaussianDist) -> Result<SystemModel> {
    let a = params.transition;
    let transition = AdditiveGaussianTransition::new(
        1,
        Arc::new(move |x, _| x * a),
        GaussianNoise::scalar(params.process_var)?,
    )?
    .with_jacobian(Arc::new(move |_, _| DMatrix::from_element(1, 1, a)));
    let identity = |noise| {
        AdditiveGaussianObservation::new(1, Arc::new(|x: &DVector<f64>, _| x.clone()), noise)
            .with_jacobian(Arc::new(|_, _| DMatrix::identity(1, 1)))
    };
    SystemModel::new(
        transition,
        identity(GaussianNoise::scalar(params.attacker_obs_var)?),
        identity(GaussianNoise::scalar(params.defender_obs_var)?),
        initial,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObservationDensity, TransitionKernel};
    use crate::rng::RngStream;

    fn ungm() -> SystemModel {
        ungm_model(&UngmParams::default(), GaussianDist::scalar(0.0, 5.0).unwrap()).unwrap()
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn ungm_drift_values() {
        assert_eq!(ungm_drift(0.0, 0), 8.0);
        // 0.5 + 12.5 + 8 cos(1.2), evaluated independently with mpmath
        assert!((ungm_drift(1.0, 1) - 15.898_862_035_813_39).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_transition_is_the_drift() {
        let m = ungm();
        let t = m.transition.clone().with_noise(GaussianNoise::scalar(0.0).unwrap()).unwrap();
        let mut rng = RngStream::new(0).run(0).rng(0, 0, Purpose::Process);
        assert_eq!(t.sample(&v(0.0), 0, &mut rng).unwrap()[0], 8.0);
    }

    #[test]
    fn ungm_observation_log_densities() {
        let m = ungm();
        let lp = m.attacker_obs.log_density(&v(3.2), &v(8.0), 1).unwrap();
        assert!((lp + 0.918_938_533_204_672_7).abs() < 1e-12);
        // β: a = 0 given x̂ = √50 so g = 5, E = 5 → log N(0; 5, 5)
        let lp = m.defender_obs.log_density(&v(0.0), &v(50f64.sqrt()), 1).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 5.0).ln() - 25.0 / 10.0;
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn ungm_analytic_jacobians_match_finite_differences() {
        let m = ungm();
        for &x in &[-3.0, -0.4, 0.0, 1.3, 7.5] {
            let a = m.transition.jacobian(&v(x), 2).unwrap()[(0, 0)];
            let n = m.transition.numeric_jacobian(&v(x), 2).unwrap()[(0, 0)];
            assert!((a - n).abs() < 1e-6 * a.abs().max(1.0));
            let a = m.attacker_obs.jacobian(&v(x), 2).unwrap()[(0, 0)];
            let n = m.attacker_obs.numeric_jacobian(&v(x), 2).unwrap()[(0, 0)];
            assert!((a - n).abs() < 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn bearing_zero_noise_observation() {
        let p = BearingParams::default();
        let track = SensorTrack::nominal(&p, 20);
        assert_eq!(track.at(1), [4.0, 20.0]);
        let init = GaussianDist::new(DVector::from_vec(vec![80.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let m = bearing_model(&p, track, init).unwrap();
        let obs = m.attacker_obs.clone().with_noise(GaussianNoise::scalar(0.0).unwrap()).unwrap();
        let mut rng = RngStream::new(0).run(0).rng(1, 0, Purpose::AttackerObs);
        let y = obs.sample(&DVector::from_vec(vec![84.0, 1.0]), 1, &mut rng).unwrap();
        // atan(20 / 80)
        assert!((y[0] - 0.244_978_663_126_864_15).abs() < 1e-14);
    }

    #[test]
    fn bearing_noise_variance_in_radians() {
        assert!((degrees_std_to_rad_var(3.0) - 2.741_556_778_080_377e-3).abs() < 1e-15);
    }

    #[test]
    fn bearing_jacobian_matches_finite_differences() {
        let p = BearingParams::default();
        let track = SensorTrack::nominal(&p, 20);
        let init = GaussianDist::new(DVector::from_vec(vec![80.0, 1.0]), DMatrix::zeros(2, 2)).unwrap();
        let m = bearing_model(&p, track, init).unwrap();
        let x = DVector::from_vec(vec![70.0, 1.2]);
        let a = m.defender_obs.jacobian(&x, 5).unwrap();
        let n = m.defender_obs.numeric_jacobian(&x, 5).unwrap();
        assert!((a - n).abs().max() < 1e-8);
    }

    #[test]
    fn sensor_track_is_reproducible() {
        let p = BearingParams::default();
        let s = RngStream::new(9).run(2);
        assert_eq!(SensorTrack::sample(&p, 20, &s), SensorTrack::sample(&p, 20, &s));
        assert_ne!(SensorTrack::sample(&p, 20, &s), SensorTrack::nominal(&p, 20));
    }
}
