//! Inverse particle filter.
//!
//! The defender knows the true states `x_k` and observes the attacker's
//! actions `a_k`; it tracks the attacker's estimate `x̂_k` with joint particles
//! `(x̂ⁱ, yⁱ)`. Each recursion samples the attacker's observation from
//! `ρ(·|x_k)`, pushes every particle through the attacker's filter map `T`,
//! optionally rejects the whole draw when the predicted ensemble explains
//! `a_k` too poorly, weights by `β(a_k | x̂ⁱ)` and resamples.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{FilterError, Result};
use crate::forward::{normalize_log_weights, weighted_mean_cov, ResamplingScheme};
use crate::inverse::map::ForwardMap;
use crate::model::{GaussianDist, ObservationDensity, SystemModel};
use crate::par;
use crate::rng::{Purpose, RunStream};

/// Which distribution an [`InverseEnsemble`] currently represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Equally weighted draws from the prediction density.
    Predicted,
    /// Normalized likelihood weights applied; the estimate is taken here.
    Weighted,
    /// Equally weighted after resampling; input to the next recursion.
    Resampled,
}

/// One joint particle: the attacker's estimate, the attacker filter's
/// internal state as replicated for this particle, and the sampled attacker
/// observation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseParticle<A> {
    pub xhat: DVector<f64>,
    pub fwd_aux: A,
    pub ybar: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseEnsemble<A> {
    particles: Vec<InverseParticle<A>>,
    weights: Vec<f64>,
    phase: Phase,
}

impl<A: Clone> InverseEnsemble<A> {
    pub fn new(particles: Vec<InverseParticle<A>>, weights: Vec<f64>, phase: Phase) -> Result<Self> {
        if particles.is_empty() {
            return Err(FilterError::InvalidArgument("ensemble needs at least one particle".into()));
        }
        if weights.len() != particles.len() {
            return Err(FilterError::Dimension {
                context: "inverse ensemble weights",
                expected: particles.len(),
                actual: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(FilterError::InvalidArgument(format!(
                "inverse ensemble weights must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        Ok(Self {
            particles,
            weights,
            phase,
        })
    }

    /// Equally weighted ensemble in the given phase.
    pub fn uniform(particles: Vec<InverseParticle<A>>, phase: Phase) -> Result<Self> {
        let n = particles.len().max(1);
        let w = vec![1.0 / n as f64; particles.len()];
        Self::new(particles, w, phase)
    }

    /// Draw `x̂ⁱ₀ ~ init` and give every particle the same auxiliary state.
    pub fn initialize(n: usize, init: &GaussianDist, aux: A, stream: &RunStream) -> Result<Self> {
        let particles = (0..n)
            .map(|i| InverseParticle {
                xhat: init.sample(&mut stream.rng(0, i, Purpose::InverseInit)),
                fwd_aux: aux.clone(),
                ybar: DVector::zeros(0),
            })
            .collect();
        Self::uniform(particles, Phase::Resampled)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[InverseParticle<A>] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn expect_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(FilterError::Phase {
                expected,
                actual: self.phase,
            });
        }
        Ok(())
    }

    fn xhats(&self) -> Vec<DVector<f64>> {
        self.particles.iter().map(|p| p.xhat.clone()).collect()
    }
}

/// Threshold `γ_k` for the modification step and the retry budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModificationPolicy {
    /// Constant threshold, used where no schedule entry exists.
    #[serde(default)]
    pub gamma: f64,
    /// Optional per-step thresholds; entry `k − 1` applies at time `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_schedule: Option<Vec<f64>>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_max_retries() -> u32 {
    10
}

impl Default for ModificationPolicy {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            gamma_schedule: None,
            max_retries: default_max_retries(),
        }
    }
}

impl ModificationPolicy {
    pub fn constant(gamma: f64, max_retries: u32) -> Self {
        Self {
            gamma,
            gamma_schedule: None,
            max_retries,
        }
    }

    pub fn gamma_at(&self, k: usize) -> f64 {
        self.gamma_schedule
            .as_ref()
            .and_then(|s| s.get(k.wrapping_sub(1)).copied())
            .unwrap_or(self.gamma)
    }

    pub fn validate(&self) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ConfigError::new("modification.gamma", "must be a finite value >= 0"));
        }
        if let Some(s) = &self.gamma_schedule {
            if s.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(ConfigError::new("modification.gamma_schedule", "entries must be finite and >= 0"));
            }
        }
        if self.max_retries < 1 {
            return Err(ConfigError::new("modification.max_retries", "must be at least 1"));
        }
        Ok(())
    }
}

/// Result of the modification check.
#[derive(Debug, Clone, PartialEq)]
pub struct ModificationOutcome {
    pub accepted: bool,
    /// `⟨π̃ᴺ_{k|k−1}, β⟩ = (1/N) Σ β(a_k | x̂ⁱ)`.
    pub mean_likelihood: f64,
    /// `log β(a_k | x̂ⁱ)` per particle, reused for weighting.
    pub log_likelihoods: Vec<f64>,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IpfDiagnostics {
    /// Number of rejected draws before acceptance.
    pub retries: u32,
    /// `⟨π̃ᴺ_{k|k−1}, β⟩` of the accepted draw.
    pub mean_likelihood: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpfStepOutput<A> {
    pub estimate: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Weighted ensemble the estimate was computed from.
    pub weighted: InverseEnsemble<A>,
    pub ensemble: InverseEnsemble<A>,
    pub diagnostics: IpfDiagnostics,
}

/// Sampling step: for each particle draw `ȳⁱ ~ ρ(·|x_k)` and set
/// `(x̂ⁱ, auxⁱ) ← T(x̂ⁱ_{k−1}, auxⁱ, ȳⁱ)`.
///
/// `attempt` selects fresh random streams when the modification step asks
/// for a redraw.
pub fn ipf_sis<M: ForwardMap>(
    map: &M,
    attacker_obs: &dyn ObservationDensity,
    prev: &InverseEnsemble<M::Aux>,
    x_k: &DVector<f64>,
    k: usize,
    stream: &RunStream,
    attempt: u32,
) -> Result<InverseEnsemble<M::Aux>> {
    prev.expect_phase(Phase::Resampled)?;
    let results = par::map_indexed(prev.len(), |i| {
        let mut rng = stream.rng_attempt(k, i, Purpose::InverseSis, attempt);
        let ybar = attacker_obs.sample(x_k, k, &mut rng)?;
        let p = &prev.particles[i];
        let (xhat, fwd_aux) = map.apply(&p.xhat, &p.fwd_aux, &ybar, k)?;
        if xhat.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::NonFinite {
                context: "inverse particle forward map",
                time: k,
            });
        }
        Ok(InverseParticle { xhat, fwd_aux, ybar })
    });
    let particles = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| FilterError::Particle {
                particle: i,
                time: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    InverseEnsemble::uniform(particles, Phase::Predicted)
}

/// `log β(a_k | x̂ⁱ)` for each particle.
pub fn log_likelihoods<A: Clone + Sync>(
    defender_obs: &dyn ObservationDensity,
    ensemble: &InverseEnsemble<A>,
    a_k: &DVector<f64>,
    k: usize,
) -> Result<Vec<f64>> {
    par::map_indexed(ensemble.len(), |i| defender_obs.log_density(a_k, &ensemble.particles[i].xhat, k))
        .into_iter()
        .collect()
}

/// Mean of the likelihood values, summed in particle order.
pub fn mean_likelihood(log_likelihoods: &[f64]) -> f64 {
    let total: f64 = log_likelihoods.iter().map(|l| l.exp()).sum();
    total / log_likelihoods.len() as f64
}

/// The acceptance predicate on raw likelihood values: `mean(β) ≥ γ`.
pub fn modification_accepts(likelihoods: &[f64], gamma: f64) -> bool {
    let mean = likelihoods.iter().sum::<f64>() / likelihoods.len() as f64;
    mean >= gamma
}

/// Modification check on a predicted ensemble.
pub fn ipf_modification<A: Clone + Sync>(
    defender_obs: &dyn ObservationDensity,
    pred: &InverseEnsemble<A>,
    a_k: &DVector<f64>,
    k: usize,
    gamma: f64,
) -> Result<ModificationOutcome> {
    pred.expect_phase(Phase::Predicted)?;
    let log_likelihoods = log_likelihoods(defender_obs, pred, a_k, k)?;
    let mean = mean_likelihood(&log_likelihoods);
    Ok(ModificationOutcome {
        accepted: mean >= gamma,
        mean_likelihood: mean,
        log_likelihoods,
    })
}

/// Weights `ωⁱ ∝ β(a_k | x̂ⁱ)`, normalized in log space.
pub fn ipf_weight_update<A: Clone + Sync>(
    defender_obs: &dyn ObservationDensity,
    pred: &InverseEnsemble<A>,
    a_k: &DVector<f64>,
    k: usize,
) -> Result<InverseEnsemble<A>> {
    pred.expect_phase(Phase::Predicted)?;
    let lls = log_likelihoods(defender_obs, pred, a_k, k)?;
    weight_from_log_likelihoods(pred, &lls, k)
}

/// Weighting from precomputed log-likelihoods.
pub fn weight_from_log_likelihoods<A: Clone>(
    pred: &InverseEnsemble<A>,
    log_likelihoods: &[f64],
    k: usize,
) -> Result<InverseEnsemble<A>> {
    pred.expect_phase(Phase::Predicted)?;
    let weights = normalize_log_weights(log_likelihoods, k)?;
    InverseEnsemble::new(pred.particles.clone(), weights, Phase::Weighted)
}

/// Weighted mean and covariance of the `x̂` components.
pub fn ipf_estimate<A: Clone>(weighted: &InverseEnsemble<A>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    weighted.expect_phase(Phase::Weighted)?;
    Ok(weighted_mean_cov(&weighted.xhats(), &weighted.weights))
}

/// Resample full particles (estimate and auxiliary state) to equal weights.
pub fn ipf_resample<A: Clone>(
    weighted: &InverseEnsemble<A>,
    scheme: ResamplingScheme,
    rng: &mut dyn RngCore,
) -> Result<InverseEnsemble<A>> {
    weighted.expect_phase(Phase::Weighted)?;
    let idx = scheme.resample(&weighted.weights, rng);
    let particles = idx.into_iter().map(|i| weighted.particles[i].clone()).collect();
    InverseEnsemble::uniform(particles, Phase::Resampled)
}

/// Observation laws the inverse filter needs.
#[derive(Clone, Copy)]
pub struct InverseObservations<'a> {
    /// `ρ(y | x)`, sampled at the true state.
    pub attacker: &'a dyn ObservationDensity,
    /// `β(a | x̂)`, used for weighting.
    pub defender: &'a dyn ObservationDensity,
}

impl<'a> InverseObservations<'a> {
    pub fn from_model(model: &'a SystemModel) -> Self {
        Self {
            attacker: &model.attacker_obs,
            defender: &model.defender_obs,
        }
    }
}

/// One full recursion: sample/modify until accepted, weight, estimate,
/// resample.
#[allow(clippy::too_many_arguments)]
pub fn ipf_step<M: ForwardMap>(
    map: &M,
    obs: InverseObservations<'_>,
    prev: &InverseEnsemble<M::Aux>,
    x_k: &DVector<f64>,
    a_k: &DVector<f64>,
    k: usize,
    policy: &ModificationPolicy,
    scheme: ResamplingScheme,
    stream: &RunStream,
) -> Result<IpfStepOutput<M::Aux>> {
    let gamma = policy.gamma_at(k);
    let mut attempt = 0u32;
    let (pred, outcome) = loop {
        let pred = ipf_sis(map, obs.attacker, prev, x_k, k, stream, attempt)?;
        let outcome = ipf_modification(obs.defender, &pred, a_k, k, gamma)?;
        if outcome.accepted {
            break (pred, outcome);
        }
        attempt += 1;
        if attempt >= policy.max_retries {
            return Err(FilterError::ThresholdUnreachable {
                time: k,
                attempts: attempt,
                mean_likelihood: outcome.mean_likelihood,
                gamma,
            });
        }
    };
    let weighted = weight_from_log_likelihoods(&pred, &outcome.log_likelihoods, k)?;
    let (estimate, cov) = ipf_estimate(&weighted)?;
    let mut rng = stream.rng(k, 0, Purpose::InverseResample);
    let ensemble = ipf_resample(&weighted, scheme, &mut rng)?;
    debug_assert!(ensemble.weights.iter().all(|&w| w == ensemble.weights[0]));
    Ok(IpfStepOutput {
        estimate,
        cov,
        weighted,
        ensemble,
        diagnostics: IpfDiagnostics {
            retries: attempt,
            mean_likelihood: outcome.mean_likelihood,
            gamma,
        },
    })
}

/// Function `φ(x̂, y)` whose posterior expectation is wanted.
#[derive(Clone)]
pub enum Estimand {
    /// `φ = x̂`; yields the defender's estimate.
    Identity,
    /// `φ = |x̂|⁴` componentwise.
    FourthPower,
    Custom(Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl fmt::Debug for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimand::Identity => f.write_str("Identity"),
            Estimand::FourthPower => f.write_str("FourthPower"),
            Estimand::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Estimand {
    fn eval(&self, xhat: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Estimand::Identity => xhat.clone(),
            Estimand::FourthPower => xhat.map(|v| v.powi(4)),
            Estimand::Custom(f) => f(xhat, y),
        }
    }
}

/// `⟨ν, φ⟩ = Σ ωⁱ φ(x̂ⁱ, yⁱ)` over a weighted or resampled ensemble.
pub fn expectation_under_ensemble<A: Clone>(ensemble: &InverseEnsemble<A>, phi: &Estimand) -> Result<DVector<f64>> {
    if ensemble.phase == Phase::Predicted {
        return Err(FilterError::Phase {
            expected: Phase::Weighted,
            actual: Phase::Predicted,
        });
    }
    let mut acc: Option<DVector<f64>> = None;
    for (p, &w) in ensemble.particles.iter().zip(&ensemble.weights) {
        let v = phi.eval(&p.xhat, &p.ybar) * w;
        acc = Some(match acc {
            Some(a) => a + v,
            None => v,
        });
    }
    Ok(acc.expect("non-empty ensemble"))
}

/// Configuration of an inverse particle filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct IpfConfig {
    pub particles: usize,
    pub policy: ModificationPolicy,
    pub resampling: ResamplingScheme,
}

/// Estimates over a whole episode.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseRun {
    /// Estimates and covariances for `k = 1..=K`.
    pub estimates: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub diagnostics: Vec<IpfDiagnostics>,
}

/// Run the inverse particle filter over known states `x_{0..=K}` and actions
/// `a_{1..=K}`.
#[allow(clippy::too_many_arguments)]
pub fn run_ipf<M: ForwardMap>(
    map: &M,
    obs: InverseObservations<'_>,
    config: &IpfConfig,
    init: &GaussianDist,
    init_aux: M::Aux,
    x: &[DVector<f64>],
    a: &[DVector<f64>],
    stream: &RunStream,
) -> Result<InverseRun> {
    run_ipf_until(map, obs, config, init, init_aux, x, a, a.len(), stream).map(|(run, _)| run)
}

/// [`run_ipf`] stopped after `until` steps, also returning the final
/// weighted ensemble.
#[allow(clippy::too_many_arguments)]
pub fn run_ipf_until<M: ForwardMap>(
    map: &M,
    obs: InverseObservations<'_>,
    config: &IpfConfig,
    init: &GaussianDist,
    init_aux: M::Aux,
    x: &[DVector<f64>],
    a: &[DVector<f64>],
    until: usize,
    stream: &RunStream,
) -> Result<(InverseRun, Option<InverseEnsemble<M::Aux>>)> {
    let mut ensemble = InverseEnsemble::initialize(config.particles, init, init_aux, stream)?;
    let mut run = InverseRun {
        estimates: Vec::with_capacity(until),
        covs: Vec::with_capacity(until),
        diagnostics: Vec::with_capacity(until),
    };
    let mut last = None;
    for k in 1..=until.min(a.len()) {
        let out = ipf_step(
            map,
            obs,
            &ensemble,
            &x[k],
            &a[k - 1],
            k,
            &config.policy,
            config.resampling,
            stream,
        )?;
        run.estimates.push(out.estimate);
        run.covs.push(out.cov);
        run.diagnostics.push(out.diagnostics);
        ensemble = out.ensemble;
        last = Some(out.weighted);
    }
    Ok((run, last))
}
