//! Experiment configuration and the built-in scenarios.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};
use crate::forward::{ForwardFilterKind, ResamplingScheme};
use crate::inverse::ModificationPolicy;
use crate::model::GaussianDist;
use crate::scenarios::{BearingParams, LinearParams, UngmParams};
use crate::simulate::ForwardInit;

/// Gaussian given by its mean and a row-major covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianSpec {
    pub fn scalar(mean: f64, var: f64) -> Self {
        Self {
            mean: vec![mean],
            cov: vec![vec![var]],
        }
    }

    pub fn diagonal(mean: Vec<f64>, vars: &[f64]) -> Self {
        let n = vars.len();
        let cov = (0..n)
            .map(|i| (0..n).map(|j| if i == j { vars[i] } else { 0.0 }).collect())
            .collect();
        Self { mean, cov }
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        matrix(&self.cov)
    }

    pub fn to_dist(&self) -> Result<GaussianDist> {
        GaussianDist::new(self.mean_vector(), self.cov_matrix())
    }

    fn validate(&self, key: &str, dim: usize) -> Result<(), ConfigError> {
        if self.mean.len() != dim {
            return Err(ConfigError::new(
                format!("{key}.mean"),
                format!("expected {dim} entries, got {}", self.mean.len()),
            ));
        }
        validate_cov(&format!("{key}.cov"), &self.cov, dim)?;
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::new(format!("{key}.mean"), "entries must be finite"));
        }
        Ok(())
    }
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn validate_cov(key: &str, cov: &[Vec<f64>], dim: usize) -> Result<(), ConfigError> {
    if cov.len() != dim || cov.iter().any(|r| r.len() != dim) {
        return Err(ConfigError::new(key, format!("expected a {dim}x{dim} matrix")));
    }
    let m = matrix(cov);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::new(key, "entries must be finite"));
    }
    if !crate::linalg::is_symmetric(&m, 1e-12) {
        return Err(ConfigError::new(key, "matrix must be symmetric"));
    }
    if crate::linalg::psd_cholesky(&m, "config covariance").is_err() {
        return Err(ConfigError::new(key, "matrix must be positive semidefinite"));
    }
    Ok(())
}

/// System model family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Ungm(UngmParams),
    Bearing(BearingParams),
    Linear(LinearParams),
}

impl ModelConfig {
    pub fn state_dim(&self) -> usize {
        match self {
            ModelConfig::Bearing(_) => 2,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(format!("model.{key}"), format!("must be a finite value > 0, got {v}")))
            }
        };
        match self {
            ModelConfig::Ungm(p) => {
                positive("process_var", p.process_var)?;
                positive("attacker_obs_var", p.attacker_obs_var)?;
                positive("defender_obs_var", p.defender_obs_var)
            }
            ModelConfig::Bearing(p) => {
                positive("dt", p.dt)?;
                positive("process_var", p.process_var)?;
                positive("attacker_noise_deg", p.attacker_noise_deg)?;
                positive("defender_noise_deg", p.defender_noise_deg)?;
                positive("sensor_jitter_var", p.sensor_jitter_var)?;
                if !p.sensor_speed.is_finite() || !p.sensor_altitude.is_finite() {
                    return Err(ConfigError::new("model.sensor_speed", "sensor track must be finite"));
                }
                Ok(())
            }
            ModelConfig::Linear(p) => {
                if !p.transition.is_finite() {
                    return Err(ConfigError::new("model.transition", "must be finite"));
                }
                positive("process_var", p.process_var)?;
                positive("attacker_obs_var", p.attacker_obs_var)?;
                positive("defender_obs_var", p.defender_obs_var)
            }
        }
    }
}

/// Attacker filter initialization as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForwardInitConfig {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Position `scale / atan(y₁)` and zero velocity, from the first bearing.
    FirstBearing { scale: f64, cov: Vec<Vec<f64>> },
}

impl ForwardInitConfig {
    pub fn to_init(&self) -> Result<ForwardInit> {
        Ok(match self {
            ForwardInitConfig::Gaussian { mean, cov } => ForwardInit::Gaussian(
                GaussianSpec {
                    mean: mean.clone(),
                    cov: cov.clone(),
                }
                .to_dist()?,
            ),
            ForwardInitConfig::FirstBearing { scale, cov } => ForwardInit::FirstBearing {
                scale: *scale,
                cov: matrix(cov),
            },
        })
    }

    fn validate(&self, dim: usize) -> Result<(), ConfigError> {
        match self {
            ForwardInitConfig::Gaussian { mean, cov } => GaussianSpec {
                mean: mean.clone(),
                cov: cov.clone(),
            }
            .validate("forward_init", dim),
            ForwardInitConfig::FirstBearing { scale, cov } => {
                if !scale.is_finite() {
                    return Err(ConfigError::new("forward_init.scale", "must be finite"));
                }
                validate_cov("forward_init.cov", cov, dim)
            }
        }
    }
}

/// Defender's filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InverseFilterKind {
    Iekf,
    Ipf { particles: usize },
}

impl InverseFilterKind {
    pub fn label(&self) -> &'static str {
        match self {
            InverseFilterKind::Iekf => "I-EKF",
            InverseFilterKind::Ipf { .. } => "I-PF",
        }
    }
}

/// Label of an inverse filter run against a given attacker filter, e.g.
/// `I-PF-P`.
pub fn inverse_label(inverse: InverseFilterKind, forward: ForwardFilterKind) -> String {
    format!("{}-{}", inverse.label(), forward.suffix())
}

/// Everything needed to run a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelConfig,
    /// Law of the true initial state `x_0`.
    pub truth_init: GaussianSpec,
    pub forward_init: ForwardInitConfig,
    /// Prior on the attacker's initial estimate, used by both inverse filters.
    pub inverse_init: GaussianSpec,
    /// Initial covariance of the attacker-EKF replica carried inside `T`.
    pub replica_cov: Vec<Vec<f64>>,
    pub forward_filters: Vec<ForwardFilterKind>,
    pub inverse_filters: Vec<InverseFilterKind>,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub modification: ModificationPolicy,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    /// State component treated as position for relative-error output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_index: Option<usize>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        let n = self.model.state_dim();
        self.truth_init.validate("truth_init", n)?;
        self.forward_init.validate(n)?;
        self.inverse_init.validate("inverse_init", n)?;
        validate_cov("replica_cov", &self.replica_cov, n)?;
        if matches!(self.forward_init, ForwardInitConfig::FirstBearing { .. })
            && !matches!(self.model, ModelConfig::Bearing(_))
        {
            return Err(ConfigError::new("forward_init.type", "first_bearing needs the bearing model"));
        }
        if self.forward_filters.is_empty() {
            return Err(ConfigError::new("forward_filters", "at least one forward filter is required"));
        }
        for (i, f) in self.forward_filters.iter().enumerate() {
            if let ForwardFilterKind::Pf { particles: 0 } = f {
                return Err(ConfigError::new(format!("forward_filters[{i}].particles"), "must be at least 1"));
            }
        }
        for (i, f) in self.inverse_filters.iter().enumerate() {
            if let InverseFilterKind::Ipf { particles: 0 } = f {
                return Err(ConfigError::new(format!("inverse_filters[{i}].particles"), "must be at least 1"));
            }
        }
        let labels = self.labels();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(ConfigError::new("forward_filters", format!("duplicate filter label {l}")));
            }
        }
        if self.horizon < 1 {
            return Err(ConfigError::new("horizon", "must be at least 1"));
        }
        if self.runs < 1 {
            return Err(ConfigError::new("runs", "must be at least 1"));
        }
        if let Some(p) = self.position_index {
            if p >= n {
                return Err(ConfigError::new("position_index", format!("must be below the state dimension {n}")));
            }
        }
        self.modification.validate()
    }

    /// Output labels in emission order: forward filters, then every inverse
    /// filter against every forward filter.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.forward_filters.iter().map(|f| f.label().to_string()).collect();
        for inv in &self.inverse_filters {
            for fwd in &self.forward_filters {
                out.push(inverse_label(*inv, *fwd));
            }
        }
        out
    }

    pub fn replica_cov_matrix(&self) -> DMatrix<f64> {
        matrix(&self.replica_cov)
    }

    /// Copy with a different master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }
}

/// Default master seed of the built-in scenarios.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Univariate nonlinear growth model experiment.
pub fn build_ungm() -> ScenarioConfig {
    ScenarioConfig {
        name: "ungm".into(),
        model: ModelConfig::Ungm(UngmParams::default()),
        truth_init: GaussianSpec::scalar(0.0, 5.0),
        forward_init: ForwardInitConfig::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![5.0]],
        },
        inverse_init: GaussianSpec::scalar(0.0, 10.0),
        replica_cov: vec![vec![10.0]],
        forward_filters: vec![ForwardFilterKind::Ekf, ForwardFilterKind::Pf { particles: 25 }],
        inverse_filters: vec![InverseFilterKind::Iekf, InverseFilterKind::Ipf { particles: 50 }],
        horizon: 100,
        runs: 250,
        seed: DEFAULT_SEED,
        modification: ModificationPolicy::default(),
        resampling: ResamplingScheme::Systematic,
        position_index: None,
    }
}

/// Bearing-only tracking experiment.
pub fn build_bearing() -> ScenarioConfig {
    let x0 = vec![80.0, 1.0];
    ScenarioConfig {
        name: "bearing".into(),
        model: ModelConfig::Bearing(BearingParams::default()),
        truth_init: GaussianSpec::diagonal(x0.clone(), &[0.0, 0.0]),
        forward_init: ForwardInitConfig::FirstBearing {
            scale: 20.0,
            cov: vec![vec![16.0, 0.0], vec![0.0, 1.0]],
        },
        inverse_init: GaussianSpec::diagonal(x0, &[1.0, 1.0]),
        replica_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        forward_filters: vec![ForwardFilterKind::Ekf, ForwardFilterKind::Pf { particles: 100 }],
        inverse_filters: vec![InverseFilterKind::Iekf, InverseFilterKind::Ipf { particles: 100 }],
        horizon: 20,
        runs: 100,
        seed: DEFAULT_SEED,
        modification: ModificationPolicy::default(),
        resampling: ResamplingScheme::Systematic,
        position_index: Some(0),
    }
}

/// Scalar linear-Gaussian system where the EKF is the exact Kalman filter.
pub fn build_linear() -> ScenarioConfig {
    ScenarioConfig {
        name: "linear".into(),
        model: ModelConfig::Linear(LinearParams::default()),
        truth_init: GaussianSpec::scalar(0.0, 1.0),
        forward_init: ForwardInitConfig::Gaussian {
            mean: vec![0.0],
            cov: vec![vec![1.0]],
        },
        inverse_init: GaussianSpec::scalar(0.0, 1.0),
        replica_cov: vec![vec![1.0]],
        forward_filters: vec![ForwardFilterKind::Ekf],
        inverse_filters: vec![InverseFilterKind::Iekf, InverseFilterKind::Ipf { particles: 5000 }],
        horizon: 20,
        runs: 100,
        seed: DEFAULT_SEED,
        modification: ModificationPolicy::default(),
        resampling: ResamplingScheme::Systematic,
        position_index: None,
    }
}

/// Built-in scenario names with one-line descriptions.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("ungm", "univariate nonlinear growth model, EKF and PF attackers, K=100, M=250"),
    ("bearing", "bearing-only tracking with a moving sensor, K=20, M=100"),
    ("linear", "scalar linear-Gaussian oracle, K=20, M=100"),
];

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "ungm" => Some(build_ungm()),
        "bearing" => Some(build_bearing()),
        "linear" => Some(build_linear()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ungm_defaults() {
        let c = build_ungm();
        let ModelConfig::Ungm(p) = c.model else { panic!() };
        assert_eq!(p.process_var, 10.0);
        assert_eq!(c.inverse_filters[1], InverseFilterKind::Ipf { particles: 50 });
        assert_eq!(c.horizon, 100);
        assert_eq!(c.runs, 250);
        assert!(c.validate().is_ok());
        assert_eq!(c.labels(), ["EKF", "PF", "I-EKF-E", "I-EKF-P", "I-PF-E", "I-PF-P"]);
    }

    #[test]
    fn bearing_defaults() {
        let c = build_bearing();
        assert_eq!(c.truth_init.mean, vec![80.0, 1.0]);
        let ForwardInitConfig::FirstBearing { cov, .. } = &c.forward_init else { panic!() };
        assert_eq!(cov, &vec![vec![16.0, 0.0], vec![0.0, 1.0]]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn negative_variance_names_key() {
        let mut c = build_ungm();
        c.model = ModelConfig::Ungm(UngmParams {
            process_var: -1.0,
            ..UngmParams::default()
        });
        assert_eq!(c.validate().unwrap_err().key, "model.process_var");
        let mut c = build_ungm();
        c.inverse_init = GaussianSpec::scalar(0.0, -2.0);
        assert_eq!(c.validate().unwrap_err().key, "inverse_init.cov");
    }

    #[test]
    fn zero_particles_and_runs_rejected() {
        let mut c = build_ungm();
        c.inverse_filters[1] = InverseFilterKind::Ipf { particles: 0 };
        assert_eq!(c.validate().unwrap_err().key, "inverse_filters[1].particles");
        assert_eq!(build_ungm().with_runs(0).validate().unwrap_err().key, "runs");
    }
}
