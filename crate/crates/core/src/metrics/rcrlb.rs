//! Recursive Cramér–Rao lower bound for additive-Gaussian systems.
//!
//! `J_k = D22 − D21 (J_{k−1} + D11)⁻¹ D12` with
//! `D11 = Ê[FᵀQ⁻¹F]`, `D12 = −Ê[FᵀQ⁻¹] = D21ᵀ`, `D22 = Ê[Q⁻¹] + Ê[HᵀR⁻¹H]`,
//! where `Ê` averages over a Monte Carlo trajectory ensemble.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::inverse::{linearize_map, ForwardMap};
use crate::linalg;
use crate::model::SystemModel;

/// Jacobians and noise precisions of one trajectory at one transition
/// `k − 1 → k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherSample {
    /// Transition Jacobian at the state at `k − 1`.
    pub f: DMatrix<f64>,
    /// Inverse process-noise covariance for this transition.
    pub q_inv: DMatrix<f64>,
    /// Observation Jacobian at the state at `k`.
    pub h: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
}

/// Averaged information blocks for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherTerms {
    pub d11: DMatrix<f64>,
    pub d12: DMatrix<f64>,
    pub d22: DMatrix<f64>,
}

impl FisherTerms {
    pub fn from_samples(samples: &[FisherSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| FilterError::InvalidArgument("no trajectories for the bound".into()))?;
        let n = first.f.nrows();
        let mut d11 = DMatrix::zeros(n, n);
        let mut d12 = DMatrix::zeros(n, n);
        let mut d22 = DMatrix::zeros(n, n);
        for s in samples {
            let ftq = s.f.transpose() * &s.q_inv;
            d11 += &ftq * &s.f;
            d12 -= ftq;
            d22 += &s.q_inv + s.h.transpose() * &s.r_inv * &s.h;
        }
        let m = samples.len() as f64;
        Ok(Self {
            d11: d11 / m,
            d12: d12 / m,
            d22: d22 / m,
        })
    }
}

/// Information matrices `J_0..J_K` and bounds `tr(J_k⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub j: Vec<DMatrix<f64>>,
    pub bound: Vec<f64>,
}

/// Run the recursion from `j0` through `terms[k − 1]` for `k = 1..=K`.
pub fn rcrlb_recursion(j0: &DMatrix<f64>, terms: &[FisherTerms]) -> Result<FisherInfo> {
    let mut j = vec![j0.clone()];
    let mut bound = vec![linalg::inverse(j0, "initial information")?.trace()];
    for t in terms {
        let prev = j.last().expect("non-empty");
        let inner = linalg::inverse(&(prev + &t.d11), "J + D11")?;
        let next = linalg::symmetrize(&(&t.d22 - t.d12.transpose() * inner * &t.d12));
        bound.push(linalg::inverse(&next, "information matrix")?.trace());
        j.push(next);
    }
    Ok(FisherInfo { j, bound })
}

/// Bound for the attacker's forward filter from true trajectories
/// `x[run][0..=K]`.
pub fn forward_rcrlb(model: &SystemModel, x: &[Vec<DVector<f64>>], j0: &DMatrix<f64>) -> Result<FisherInfo> {
    let q_inv = linalg::inverse(model.transition.noise_cov(), "process noise")?;
    let r_inv = linalg::inverse(model.attacker_obs.noise_cov(), "observation noise")?;
    let horizon = x.first().map_or(0, |r| r.len().saturating_sub(1));
    let terms = (1..=horizon)
        .map(|k| {
            let samples = x
                .iter()
                .map(|run| {
                    Ok(FisherSample {
                        f: model.transition.jacobian(&run[k - 1], k - 1)?,
                        q_inv: q_inv.clone(),
                        h: model.attacker_obs.jacobian(&run[k], k)?,
                        r_inv: r_inv.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            FisherTerms::from_samples(&samples)
        })
        .collect::<Result<Vec<_>>>()?;
    rcrlb_recursion(j0, &terms)
}

/// Bound for an inverse filter tracking an attacker whose filter is `map`.
///
/// Uses `A = ∂T/∂x̂` as the transition Jacobian, `B R Bᵀ` as process noise
/// (with `B = ∂T/∂y`) and `G = ∂g/∂x̂` with noise `E`. Evaluated along the
/// attacker's actual estimates `xhat[run][0..=K]` and filter states
/// `aux[run][0..=K]`.
pub fn inverse_rcrlb<M: ForwardMap>(
    map: &M,
    model: &SystemModel,
    x: &[Vec<DVector<f64>>],
    xhat: &[Vec<DVector<f64>>],
    aux: &[Vec<M::Aux>],
    j0: &DMatrix<f64>,
) -> Result<FisherInfo> {
    let r = model.attacker_obs.noise_cov();
    let e_inv = linalg::inverse(model.defender_obs.noise_cov(), "action noise")?;
    let horizon = xhat.first().map_or(0, |r| r.len().saturating_sub(1));
    let terms = (1..=horizon)
        .map(|k| {
            let samples = (0..xhat.len())
                .map(|m| {
                    let y = model.attacker_obs.predict(&x[m][k], k)?;
                    let lin = linearize_map(map, &xhat[m][k - 1], &aux[m][k - 1], &y, k)?;
                    let q = linalg::symmetrize(&(&lin.b * r * lin.b.transpose()));
                    Ok(FisherSample {
                        f: lin.a,
                        q_inv: linalg::inverse(&q, "inverse process noise")?,
                        h: model.defender_obs.jacobian(&xhat[m][k], k)?,
                        r_inv: e_inv.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            FisherTerms::from_samples(&samples)
        })
        .collect::<Result<Vec<_>>>()?;
    rcrlb_recursion(j0, &terms)
}
