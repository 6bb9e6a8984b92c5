use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::forward::{ekf_step, EkfState};
use crate::model::SystemModel;

/// The defender's model of the attacker's recursion
/// `x̂_k = T(x̂_{k−1}, y_k)`, with whatever internal state `T` carries
/// between steps (for an EKF, its covariance).
pub trait ForwardMap: Send + Sync {
    type Aux: Clone + Debug + PartialEq + Send + Sync;

    /// Apply `T` at time `k ≥ 1`.
    fn apply(&self, xhat: &DVector<f64>, aux: &Self::Aux, y: &DVector<f64>, k: usize) -> Result<(DVector<f64>, Self::Aux)>;
}

/// `T` realized by the attacker's EKF on a system model.
#[derive(Debug, Clone, Copy)]
pub struct EkfMap<'a> {
    model: &'a SystemModel,
}

impl<'a> EkfMap<'a> {
    pub fn new(model: &'a SystemModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &'a SystemModel {
        self.model
    }
}

impl ForwardMap for EkfMap<'_> {
    type Aux = DMatrix<f64>;

    fn apply(&self, xhat: &DVector<f64>, aux: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let out = ekf_step(self.model, &EkfState::new(xhat.clone(), aux.clone()), y, k)?;
        Ok((out.mean, out.cov))
    }
}

/// `T(x̂, y) = x̂`: an attacker that ignores its observations.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl ForwardMap for IdentityMap {
    type Aux = ();

    fn apply(&self, xhat: &DVector<f64>, _aux: &(), _y: &DVector<f64>, _k: usize) -> Result<(DVector<f64>, ())> {
        Ok((xhat.clone(), ()))
    }
}
