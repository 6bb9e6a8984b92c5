use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::forward::moments::weighted_mean_cov;
use crate::forward::resample::{normalize_log_weights, systematic_resample};
use crate::model::{ObservationDensity, TransitionKernel};
use crate::par;
use crate::rng::{Purpose, RunStream};

/// Weighted particle approximation of a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    particles: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(FilterError::InvalidArgument("ensemble needs at least one particle".into()));
        }
        if particles.len() != weights.len() {
            return Err(FilterError::Dimension {
                context: "ensemble weights",
                expected: particles.len(),
                actual: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(FilterError::InvalidArgument(format!(
                "weights must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        Ok(Self { particles, weights })
    }

    /// Equally weighted ensemble.
    pub fn uniform(particles: Vec<DVector<f64>>) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean_cov(&self) -> (DVector<f64>, DMatrix<f64>) {
        weighted_mean_cov(&self.particles, &self.weights)
    }
}

/// Output of one bootstrap-PF recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct PfStep {
    /// Resampled, equally weighted ensemble carried to the next step.
    pub ensemble: ParticleEnsemble,
    /// Weights before resampling, aligned with `propagated`.
    pub weights: Vec<f64>,
    pub propagated: Vec<DVector<f64>>,
    /// Point estimate: weighted mean before resampling.
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Bootstrap particle filter step at time `k ≥ 1`: propagate through the
/// transition (time `k − 1`), weight by `ρ(y_k | ·)` in log space, estimate,
/// then resample systematically.
pub fn bootstrap_pf_step(
    transition: &dyn TransitionKernel,
    observation: &dyn ObservationDensity,
    ensemble: &ParticleEnsemble,
    y: &DVector<f64>,
    k: usize,
    stream: &RunStream,
) -> Result<PfStep> {
    let prev = k.saturating_sub(1);
    let results: Vec<Result<(DVector<f64>, f64)>> = par::map_indexed(ensemble.len(), |i| {
        let mut rng = stream.rng(k, i, Purpose::ForwardPropagate);
        let p = transition.sample(&ensemble.particles[i], prev, &mut rng)?;
        let lw = observation.log_density(y, &p, k)?;
        Ok((p, lw))
    });
    let mut propagated = Vec::with_capacity(results.len());
    let mut log_weights = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        let (p, lw) = r.map_err(|e| FilterError::Particle {
            particle: i,
            time: k,
            source: Box::new(e),
        })?;
        propagated.push(p);
        log_weights.push(lw);
    }
    let weights = normalize_log_weights(&log_weights, k)?;
    let (mean, cov) = weighted_mean_cov(&propagated, &weights);
    let mut rng = stream.rng(k, 0, Purpose::ForwardResample);
    let indices = systematic_resample(&weights, &mut rng);
    let resampled: Vec<DVector<f64>> = indices.iter().map(|&i| propagated[i].clone()).collect();
    Ok(PfStep {
        ensemble: ParticleEnsemble::uniform(resampled)?,
        weights,
        propagated,
        mean,
        cov,
    })
}
