//! Attacker–defender state-space model.
//!
//! The defender's state `x_k` evolves through a transition kernel, the attacker
//! observes it through `ρ(y_k | x_k)` and runs a forward filter producing
//! `x̂_k`, and the defender observes the attacker's action through
//! `β(a_k | x̂_k)`. All three kernels here are additive-Gaussian with
//! explicitly time-indexed maps.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{FilterError, Result};
use crate::linalg::{self, all_finite_vec};

/// Time-indexed vector map `(v, k) -> w`.
pub type VectorFn = Arc<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync>;
/// Time-indexed Jacobian `(v, k) -> ∂w/∂v`.
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Draws the next state given the current one.
pub trait TransitionKernel: Send + Sync {
    fn state_dim(&self) -> usize;
    /// Draw `x_{k+1} ~ K(· | x_k)`; `k` is the time index of `x`.
    fn sample(&self, x: &DVector<f64>, k: usize, rng: &mut dyn RngCore) -> Result<DVector<f64>>;
}

/// A conditional observation law with sampler and log-density.
pub trait ObservationDensity: Send + Sync {
    fn obs_dim(&self) -> usize;
    fn sample(&self, cond: &DVector<f64>, k: usize, rng: &mut dyn RngCore) -> Result<DVector<f64>>;
    fn log_density(&self, z: &DVector<f64>, cond: &DVector<f64>, k: usize) -> Result<f64>;
}

/// Multivariate normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(FilterError::Dimension {
                context: "gaussian covariance",
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        let factor = linalg::psd_cholesky(&cov, "gaussian covariance")?;
        Ok(Self { mean, cov, factor })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        &self.mean + &self.factor * linalg::standard_normal_vector(self.dim(), rng)
    }
}

/// Zero-mean Gaussian noise entering through a gain: `n = G w`, `w ~ N(0, C)`.
#[derive(Clone, PartialEq)]
pub struct GaussianNoise {
    gain: DMatrix<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    effective: DMatrix<f64>,
    precision: Option<DMatrix<f64>>,
    log_norm: f64,
}

impl fmt::Debug for GaussianNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianNoise")
            .field("effective", &self.effective)
            .finish()
    }
}

fn well_conditioned(l: &DMatrix<f64>, m: &DMatrix<f64>) -> bool {
    let scale = m.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
    l.diagonal().iter().all(|d| d * d > 1e-12 * scale)
}

impl GaussianNoise {
    /// Noise with covariance `cov` added directly.
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        Self::with_gain(DMatrix::identity(n, n), cov)
    }

    pub fn scalar(var: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, var))
    }

    /// Noise `G w` with `w ~ N(0, cov)`; effective covariance `G cov Gᵀ`.
    pub fn with_gain(gain: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if gain.ncols() != cov.nrows() {
            return Err(FilterError::Dimension {
                context: "noise gain",
                expected: cov.nrows(),
                actual: gain.ncols(),
            });
        }
        let chol = linalg::psd_cholesky(&cov, "noise covariance")?;
        let factor = &gain * chol;
        let effective = linalg::symmetrize(&(&gain * &cov * gain.transpose()));
        let (precision, log_norm) = match effective.clone().cholesky() {
            Some(c) if well_conditioned(&c.l(), &effective) => {
                let log_det = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let n = effective.nrows() as f64;
                let p = c.inverse();
                if p.iter().all(|v| v.is_finite()) && log_det.is_finite() {
                    (Some(p), -0.5 * (n * LN_2PI + log_det))
                } else {
                    (None, f64::NAN)
                }
            }
            _ => (None, f64::NAN),
        };
        Ok(Self {
            gain,
            cov,
            factor,
            effective,
            precision,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.effective.nrows()
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Covariance of the driving noise `w`.
    pub fn driving_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Effective covariance `G C Gᵀ`.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.effective
    }

    pub fn precision(&self) -> Option<&DMatrix<f64>> {
        self.precision.as_ref()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        &self.factor * linalg::standard_normal_vector(self.factor.ncols(), rng)
    }

    /// Log-density of a residual under `N(0, G C Gᵀ)`.
    pub fn log_pdf(&self, residual: &DVector<f64>) -> Result<f64> {
        let precision = self.precision.as_ref().ok_or(FilterError::Singular {
            context: "observation noise covariance",
        })?;
        if residual.len() != self.dim() {
            return Err(FilterError::Dimension {
                context: "noise residual",
                expected: self.dim(),
                actual: residual.len(),
            });
        }
        let quad = residual.dot(&(precision * residual));
        Ok(self.log_norm - 0.5 * quad)
    }
}

/// `x_{k+1} = f(x_k, k) + G w_k`.
#[derive(Clone)]
pub struct AdditiveGaussianTransition {
    dim: usize,
    drift: VectorFn,
    jacobian: Option<MatrixFn>,
    noise: GaussianNoise,
}

impl fmt::Debug for AdditiveGaussianTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveGaussianTransition")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("noise", &self.noise)
            .finish()
    }
}

impl AdditiveGaussianTransition {
    pub fn new(dim: usize, drift: VectorFn, noise: GaussianNoise) -> Result<Self> {
        if noise.dim() != dim {
            return Err(FilterError::Dimension {
                context: "process noise",
                expected: dim,
                actual: noise.dim(),
            });
        }
        Ok(Self {
            dim,
            drift,
            jacobian: None,
            noise,
        })
    }

    pub fn with_jacobian(mut self, jacobian: MatrixFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    /// Drops the analytic Jacobian so the finite-difference fallback is used.
    pub fn without_jacobian(mut self) -> Self {
        self.jacobian = None;
        self
    }

    pub fn with_noise(mut self, noise: GaussianNoise) -> Result<Self> {
        if noise.dim() != self.dim {
            return Err(FilterError::Dimension {
                context: "process noise",
                expected: self.dim,
                actual: noise.dim(),
            });
        }
        self.noise = noise;
        Ok(self)
    }

    /// Deterministic part `f(x, k)`.
    pub fn drift(&self, x: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(FilterError::Dimension {
                context: "transition input",
                expected: self.dim,
                actual: x.len(),
            });
        }
        let out = (self.drift)(x, k);
        if out.len() != self.dim {
            return Err(FilterError::Dimension {
                context: "transition output",
                expected: self.dim,
                actual: out.len(),
            });
        }
        if !all_finite_vec(&out) {
            return Err(FilterError::NonFinite {
                context: "transition drift",
                time: k,
            });
        }
        Ok(out)
    }

    /// `∂f/∂x` at `(x, k)`: analytic when supplied, central differences otherwise.
    pub fn jacobian(&self, x: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => Ok(j(x, k)),
            None => self.numeric_jacobian(x, k),
        }
    }

    pub fn numeric_jacobian(&self, x: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
        linalg::finite_difference_jacobian(|v| self.drift(v, k), x)
    }

    pub fn noise(&self) -> &GaussianNoise {
        &self.noise
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        self.noise.cov()
    }
}

impl TransitionKernel for AdditiveGaussianTransition {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, x: &DVector<f64>, k: usize, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        Ok(self.drift(x, k)? + self.noise.sample(rng))
    }
}

/// `z_k = h(c, k) + n_k` for a conditioning vector `c` (the state for the
/// attacker's sensor, the forward estimate for the defender's).
#[derive(Clone)]
pub struct AdditiveGaussianObservation {
    input_dim: usize,
    map: VectorFn,
    jacobian: Option<MatrixFn>,
    noise: GaussianNoise,
}

impl fmt::Debug for AdditiveGaussianObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveGaussianObservation")
            .field("input_dim", &self.input_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("noise", &self.noise)
            .finish()
    }
}

impl AdditiveGaussianObservation {
    pub fn new(input_dim: usize, map: VectorFn, noise: GaussianNoise) -> Self {
        Self {
            input_dim,
            map,
            jacobian: None,
            noise,
        }
    }

    pub fn with_jacobian(mut self, jacobian: MatrixFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn without_jacobian(mut self) -> Self {
        self.jacobian = None;
        self
    }

    pub fn with_noise(mut self, noise: GaussianNoise) -> Result<Self> {
        if noise.dim() != self.noise.dim() {
            return Err(FilterError::Dimension {
                context: "observation noise",
                expected: self.noise.dim(),
                actual: noise.dim(),
            });
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Noise-free observation `h(c, k)`.
    pub fn predict(&self, cond: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        if cond.len() != self.input_dim {
            return Err(FilterError::Dimension {
                context: "observation input",
                expected: self.input_dim,
                actual: cond.len(),
            });
        }
        let out = (self.map)(cond, k);
        if out.len() != self.noise.dim() {
            return Err(FilterError::Dimension {
                context: "observation output",
                expected: self.noise.dim(),
                actual: out.len(),
            });
        }
        if !all_finite_vec(&out) {
            return Err(FilterError::NonFinite {
                context: "observation map",
                time: k,
            });
        }
        Ok(out)
    }

    pub fn jacobian(&self, cond: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => Ok(j(cond, k)),
            None => self.numeric_jacobian(cond, k),
        }
    }

    pub fn numeric_jacobian(&self, cond: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
        linalg::finite_difference_jacobian(|v| self.predict(v, k), cond)
    }

    pub fn noise(&self) -> &GaussianNoise {
        &self.noise
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        self.noise.cov()
    }
}

impl ObservationDensity for AdditiveGaussianObservation {
    fn obs_dim(&self) -> usize {
        self.noise.dim()
    }

    fn sample(&self, cond: &DVector<f64>, k: usize, rng: &mut dyn RngCore) -> Result<DVector<f64>> {
        Ok(self.predict(cond, k)? + self.noise.sample(rng))
    }

    fn log_density(&self, z: &DVector<f64>, cond: &DVector<f64>, k: usize) -> Result<f64> {
        if z.len() != self.obs_dim() {
            return Err(FilterError::Dimension {
                context: "observation",
                expected: self.obs_dim(),
                actual: z.len(),
            });
        }
        self.noise.log_pdf(&(z - self.predict(cond, k)?))
    }
}

/// The full attacker–defender model.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub transition: AdditiveGaussianTransition,
    /// `ρ(y | x)`.
    pub attacker_obs: AdditiveGaussianObservation,
    /// `β(a | x̂)`.
    pub defender_obs: AdditiveGaussianObservation,
    /// Law of the true initial state `x_0`.
    pub initial: GaussianDist,
}

impl SystemModel {
    pub fn new(
        transition: AdditiveGaussianTransition,
        attacker_obs: AdditiveGaussianObservation,
        defender_obs: AdditiveGaussianObservation,
        initial: GaussianDist,
    ) -> Result<Self> {
        let n = transition.state_dim();
        for (context, actual) in [
            ("attacker observation input", attacker_obs.input_dim()),
            ("defender observation input", defender_obs.input_dim()),
            ("initial distribution", initial.dim()),
        ] {
            if actual != n {
                return Err(FilterError::Dimension {
                    context,
                    expected: n,
                    actual,
                });
            }
        }
        Ok(Self {
            transition,
            attacker_obs,
            defender_obs,
            initial,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.state_dim()
    }

    pub fn attacker_obs_dim(&self) -> usize {
        self.attacker_obs.obs_dim()
    }

    pub fn defender_obs_dim(&self) -> usize {
        self.defender_obs.obs_dim()
    }
}

/// One simulated episode. `x`, `xhat` and `xhat_cov` are indexed `0..=K`;
/// `y` and `a` hold times `1..=K` at positions `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub xhat: Vec<DVector<f64>>,
    /// Covariance reported by the attacker's filter alongside each estimate.
    pub xhat_cov: Vec<DMatrix<f64>>,
    pub a: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    /// Attacker observation at time `k ≥ 1`.
    pub fn y_at(&self, k: usize) -> &DVector<f64> {
        &self.y[k - 1]
    }

    /// Defender observation at time `k ≥ 1`.
    pub fn a_at(&self, k: usize) -> &DVector<f64> {
        &self.a[k - 1]
    }
}

/// Sample the transition kernel.
pub fn sample_transition(
    model: &dyn TransitionKernel,
    x: &DVector<f64>,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>> {
    model.sample(x, k, rng)
}

pub fn obs_logdensity(
    model: &dyn ObservationDensity,
    z: &DVector<f64>,
    cond: &DVector<f64>,
    k: usize,
) -> Result<f64> {
    model.log_density(z, cond, k)
}

pub fn sample_obs(
    model: &dyn ObservationDensity,
    cond: &DVector<f64>,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>> {
    model.sample(cond, k, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream};

    fn identity_obs(var: f64) -> AdditiveGaussianObservation {
        AdditiveGaussianObservation::new(1, Arc::new(|x, _| x.clone()), GaussianNoise::scalar(var).unwrap())
    }

    #[test]
    fn scalar_log_density_at_mode() {
        let obs = identity_obs(1.0);
        let z = DVector::from_element(1, 0.7);
        let lp = obs.log_density(&z, &z, 0).unwrap();
        assert!((lp - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn log_density_matches_closed_form() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let noise = GaussianNoise::new(cov.clone()).unwrap();
        let r = DVector::from_vec(vec![0.4, -1.1]);
        let det = 2.0 * 0.5 - 0.09;
        let inv = DMatrix::from_row_slice(2, 2, &[0.5, -0.3, -0.3, 2.0]) / det;
        let quad = (r.transpose() * inv * &r)[(0, 0)];
        let expected = -LN_2PI - 0.5 * f64::ln(det) - 0.5 * quad;
        let got = noise.log_pdf(&r).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn singular_noise_has_no_density() {
        let obs = identity_obs(0.0);
        let z = DVector::from_element(1, 0.0);
        assert!(matches!(
            obs.log_density(&z, &z, 0),
            Err(FilterError::Singular { .. })
        ));
        // but it can still be sampled (deterministically)
        let mut rng = RngStream::new(1).run(0).rng(0, 0, Purpose::AttackerObs);
        assert_eq!(obs.sample(&DVector::from_element(1, 2.5), 0, &mut rng).unwrap()[0], 2.5);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let obs = identity_obs(1.0);
        let bad = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(obs.predict(&bad, 0), Err(FilterError::Dimension { .. })));
    }

    #[test]
    fn non_finite_drift_is_an_error() {
        let t = AdditiveGaussianTransition::new(
            1,
            Arc::new(|x, _| x.map(|v| 1.0 / v)),
            GaussianNoise::scalar(1.0).unwrap(),
        )
        .unwrap();
        let err = t.drift(&DVector::from_element(1, 0.0), 3).unwrap_err();
        assert_eq!(
            err,
            FilterError::NonFinite {
                context: "transition drift",
                time: 3
            }
        );
    }

    #[test]
    fn rank_deficient_process_noise_samples_along_gain() {
        let gain = DMatrix::from_column_slice(2, 1, &[0.5, 1.0]);
        let noise = GaussianNoise::with_gain(gain, DMatrix::from_element(1, 1, 0.01)).unwrap();
        assert!(noise.precision().is_none());
        let mut rng = RngStream::new(3).run(0).rng(0, 0, Purpose::Process);
        let w = noise.sample(&mut rng);
        assert!((w[0] - 0.5 * w[1]).abs() < 1e-15);
    }
}
