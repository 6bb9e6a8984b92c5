//! The attacker's forward filters: EKF and bootstrap particle filter.

pub mod ekf;
pub mod moments;
pub mod pf;
pub mod resample;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use ekf::{ekf_step, ekf_update, kalman_correct, EkfState};
pub use moments::weighted_mean_cov;
pub use pf::{bootstrap_pf_step, ParticleEnsemble, PfStep};
pub use resample::{
    multinomial_resample, normalize_log_weights, systematic_resample, systematic_resample_with_offset,
    ResamplingScheme,
};

use crate::error::Result;
use crate::model::{GaussianDist, SystemModel};
use crate::rng::{Purpose, RunStream};

/// Which filter the attacker runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForwardFilterKind {
    Ekf,
    Pf { particles: usize },
}

impl ForwardFilterKind {
    pub fn label(&self) -> &'static str {
        match self {
            ForwardFilterKind::Ekf => "EKF",
            ForwardFilterKind::Pf { .. } => "PF",
        }
    }

    /// Suffix used in inverse-filter labels (`I-PF-E`, `I-EKF-P`).
    pub fn suffix(&self) -> &'static str {
        match self {
            ForwardFilterKind::Ekf => "E",
            ForwardFilterKind::Pf { .. } => "P",
        }
    }
}

/// Particle-filter state: the resampled ensemble plus the estimate computed
/// before resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PfState {
    pub ensemble: ParticleEnsemble,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// The attacker's tracker state, realizing the map `T(·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardFilterState {
    Ekf(EkfState),
    Pf(PfState),
}

impl ForwardFilterState {
    /// Initialize from `init`: the EKF takes its moments, the PF draws
    /// independent samples from it.
    pub fn init(kind: ForwardFilterKind, init: &GaussianDist, stream: &RunStream) -> Result<Self> {
        Ok(match kind {
            ForwardFilterKind::Ekf => ForwardFilterState::Ekf(EkfState::new(init.mean().clone(), init.cov().clone())),
            ForwardFilterKind::Pf { particles } => {
                let samples: Vec<DVector<f64>> = (0..particles)
                    .map(|i| init.sample(&mut stream.rng(0, i, Purpose::ForwardInit)))
                    .collect();
                let ensemble = ParticleEnsemble::uniform(samples)?;
                let (mean, cov) = ensemble.mean_cov();
                ForwardFilterState::Pf(PfState { ensemble, mean, cov })
            }
        })
    }

    pub fn estimate(&self) -> &DVector<f64> {
        match self {
            ForwardFilterState::Ekf(s) => &s.mean,
            ForwardFilterState::Pf(s) => &s.mean,
        }
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        match self {
            ForwardFilterState::Ekf(s) => &s.cov,
            ForwardFilterState::Pf(s) => &s.cov,
        }
    }

    /// Advance with observation `y_k`.
    pub fn step(&self, model: &SystemModel, y: &DVector<f64>, k: usize, stream: &RunStream) -> Result<Self> {
        Ok(match self {
            ForwardFilterState::Ekf(s) => ForwardFilterState::Ekf(ekf_step(model, s, y, k)?),
            ForwardFilterState::Pf(s) => {
                let out = bootstrap_pf_step(&model.transition, &model.attacker_obs, &s.ensemble, y, k, stream)?;
                ForwardFilterState::Pf(PfState {
                    ensemble: out.ensemble,
                    mean: out.mean,
                    cov: out.cov,
                })
            }
        })
    }
}
