//! Episode simulation: truth, attacker observations, the attacker's forward
//! estimates and the defender's observations of the attacker's actions.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::forward::{ForwardFilterKind, ForwardFilterState};
use crate::model::{GaussianDist, ObservationDensity, SystemModel, Trajectory, TransitionKernel};
use crate::rng::{Purpose, RunStream};

/// How the attacker's filter is initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardInit {
    Gaussian(GaussianDist),
    /// Position `scale / atan(y₁)` with zero velocity, from the first bearing.
    FirstBearing { scale: f64, cov: DMatrix<f64> },
}

impl ForwardInit {
    pub fn resolve(&self, first_obs: &DVector<f64>) -> Result<GaussianDist> {
        match self {
            ForwardInit::Gaussian(g) => Ok(g.clone()),
            ForwardInit::FirstBearing { scale, cov } => {
                let mut mean = DVector::zeros(cov.nrows());
                mean[0] = scale / first_obs[0].atan();
                GaussianDist::new(mean, cov.clone())
            }
        }
    }
}

/// The attacker's filter: kind plus initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSpec {
    pub kind: ForwardFilterKind,
    pub init: ForwardInit,
}

/// True states `x_{0..=K}` and attacker observations `y_{1..=K}`.
pub fn simulate_truth(
    model: &SystemModel,
    horizon: usize,
    stream: &RunStream,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let mut x = Vec::with_capacity(horizon + 1);
    let mut y = Vec::with_capacity(horizon);
    x.push(model.initial.sample(&mut stream.rng(0, 0, Purpose::TruthInit)));
    for k in 1..=horizon {
        let next = model
            .transition
            .sample(&x[k - 1], k - 1, &mut stream.rng(k, 0, Purpose::Process))?;
        let obs = model
            .attacker_obs
            .sample(&next, k, &mut stream.rng(k, 0, Purpose::AttackerObs))?;
        x.push(next);
        y.push(obs);
    }
    Ok((x, y))
}

/// Run the attacker's filter over `y_{1..=K}`; returns estimates and reported
/// covariances for `k = 0..=K`.
pub fn run_forward_filter(
    model: &SystemModel,
    spec: &ForwardSpec,
    y: &[DVector<f64>],
    stream: &RunStream,
) -> Result<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
    let first = y.first().ok_or_else(|| FilterError::InvalidArgument("empty observation sequence".into()))?;
    let init = spec.init.resolve(first)?;
    let mut state = ForwardFilterState::init(spec.kind, &init, stream)?;
    let mut xhat = Vec::with_capacity(y.len() + 1);
    let mut cov = Vec::with_capacity(y.len() + 1);
    xhat.push(state.estimate().clone());
    cov.push(state.covariance().clone());
    for (i, obs) in y.iter().enumerate() {
        let k = i + 1;
        state = state.step(model, obs, k, stream).map_err(|e| FilterError::Divergence {
            time: k,
            reason: e.to_string(),
        })?;
        if state.estimate().iter().any(|v| !v.is_finite()) {
            return Err(FilterError::Divergence {
                time: k,
                reason: "non-finite forward estimate".into(),
            });
        }
        xhat.push(state.estimate().clone());
        cov.push(state.covariance().clone());
    }
    Ok((xhat, cov))
}

/// Defender observations `a_k ~ β(· | x̂_k)` for `k = 1..=K`.
pub fn observe_actions(model: &SystemModel, xhat: &[DVector<f64>], stream: &RunStream) -> Result<Vec<DVector<f64>>> {
    (1..xhat.len())
        .map(|k| {
            model
                .defender_obs
                .sample(&xhat[k], k, &mut stream.rng(k, 0, Purpose::DefenderObs))
        })
        .collect()
}

/// Simulate a full episode of length `horizon ≥ 1`.
pub fn simulate_episode(
    model: &SystemModel,
    forward: &ForwardSpec,
    horizon: usize,
    stream: &RunStream,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(FilterError::InvalidArgument("horizon must be at least 1".into()));
    }
    let (x, y) = simulate_truth(model, horizon, stream)?;
    let (xhat, xhat_cov) = run_forward_filter(model, forward, &y, stream)?;
    let a = observe_actions(model, &xhat, stream)?;
    Ok(Trajectory { x, y, xhat, xhat_cov, a })
}
