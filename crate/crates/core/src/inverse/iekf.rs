//! Inverse extended Kalman filter baseline.
//!
//! The inverse system has state `x̂_k`, transition
//! `x̂_k = T(x̂_{k−1}, h(x_k) + v_k)` and observation `a_k = g(x̂_k) + ε_k`.
//! Linearizing `T` around `(x̂, h(x_k))` by central differences gives
//! `A = ∂T/∂x̂` and `B = ∂T/∂y`, and the attacker's observation noise
//! enters as `B R Bᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::forward::kalman_correct;
use crate::inverse::map::ForwardMap;
use crate::linalg::{self, all_finite_mat, finite_difference_jacobian};
use crate::model::{AdditiveGaussianObservation, GaussianDist, SystemModel};

/// Inverse-EKF state: the defender's estimate of `x̂`, its covariance and the
/// replicated forward-filter state carried inside `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct IekfState<A> {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub fwd_aux: A,
}

impl<A> IekfState<A> {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, fwd_aux: A) -> Self {
        Self { mean, cov, fwd_aux }
    }

    pub fn from_dist(init: &GaussianDist, fwd_aux: A) -> Self {
        Self::new(init.mean().clone(), init.cov().clone(), fwd_aux)
    }
}

/// Linearization of `T` at `(x̂, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapLinearization<A> {
    pub value: DVector<f64>,
    pub aux: A,
    /// `∂T/∂x̂`.
    pub a: DMatrix<f64>,
    /// `∂T/∂y`.
    pub b: DMatrix<f64>,
}

/// Central-difference Jacobians of the mean output of `T` with the
/// auxiliary state held fixed.
pub fn linearize_map<M: ForwardMap>(
    map: &M,
    xhat: &DVector<f64>,
    aux: &M::Aux,
    y: &DVector<f64>,
    k: usize,
) -> Result<MapLinearization<M::Aux>> {
    let (value, next_aux) = map.apply(xhat, aux, y, k)?;
    let a = finite_difference_jacobian(|v| map.apply(v, aux, y, k).map(|r| r.0), xhat)?;
    let b = finite_difference_jacobian(|v| map.apply(xhat, aux, v, k).map(|r| r.0), y)?;
    Ok(MapLinearization {
        value,
        aux: next_aux,
        a,
        b,
    })
}

/// One inverse-EKF recursion at time `k ≥ 1` given the true state `x_k` and
/// the action observation `a_k`.
pub fn iekf_update<M: ForwardMap>(
    map: &M,
    attacker_obs: &AdditiveGaussianObservation,
    defender_obs: &AdditiveGaussianObservation,
    state: &IekfState<M::Aux>,
    x_k: &DVector<f64>,
    a_k: &DVector<f64>,
    k: usize,
) -> Result<IekfState<M::Aux>> {
    let y = attacker_obs.predict(x_k, k)?;
    let lin = linearize_map(map, &state.mean, &state.fwd_aux, &y, k)?;
    let r = attacker_obs.noise_cov();
    let cov_pred = linalg::symmetrize(&(&lin.a * &state.cov * lin.a.transpose() + &lin.b * r * lin.b.transpose()));
    if !all_finite_mat(&cov_pred) {
        return Err(FilterError::NonFinite {
            context: "inverse EKF prediction",
            time: k,
        });
    }
    let post = kalman_correct(defender_obs, &lin.value, &cov_pred, a_k, k)?;
    Ok(IekfState {
        mean: post.mean,
        cov: post.cov,
        fwd_aux: lin.aux,
    })
}

/// [`iekf_update`] with the observation laws of `model`.
pub fn iekf_step<M: ForwardMap>(
    map: &M,
    model: &SystemModel,
    state: &IekfState<M::Aux>,
    x_k: &DVector<f64>,
    a_k: &DVector<f64>,
    k: usize,
) -> Result<IekfState<M::Aux>> {
    iekf_update(map, &model.attacker_obs, &model.defender_obs, state, x_k, a_k, k)
}

/// Run the inverse EKF over `x_{0..=K}` and `a_{1..=K}`; returns the states
/// for `k = 1..=K`.
pub fn run_iekf<M: ForwardMap>(
    map: &M,
    model: &SystemModel,
    init: IekfState<M::Aux>,
    x: &[DVector<f64>],
    a: &[DVector<f64>],
) -> Result<Vec<IekfState<M::Aux>>> {
    let mut out = Vec::with_capacity(a.len());
    let mut state = init;
    for k in 1..=a.len() {
        state = iekf_step(map, model, &state, &x[k], &a[k - 1], k)?;
        out.push(state.clone());
    }
    Ok(out)
}
