//! Monte Carlo experiment runner.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::benchmarks::config::{inverse_label, InverseFilterKind, ModelConfig, ScenarioConfig};
use crate::error::{ConfigError, FilterError, Result};
use crate::forward::ForwardFilterKind;
use crate::inverse::{run_iekf, run_ipf, EkfMap, IekfState, InverseObservations, IpfConfig};
use crate::linalg;
use crate::metrics::{
    forward_rcrlb, inverse_rcrlb, nci_skipping_singular, relative_position_error, rmse_per_step, time_averaged_rmse, timing_capture,
    McAggregate,
};
use crate::model::{GaussianDist, SystemModel};
use crate::par;
use crate::rng::{RngStream, RunStream};
use crate::scenarios::{bearing_model, linear_model, ungm_model, SensorTrack};
use crate::simulate::{observe_actions, run_forward_filter, simulate_truth, ForwardInit, ForwardSpec};

/// Either a bad configuration or a failure while running filters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// A validated configuration with its distributions built.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    truth_init: GaussianDist,
    forward_init: ForwardInit,
    inverse_init: GaussianDist,
    replica_cov: DMatrix<f64>,
}

/// The attacker's filter output in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRun {
    pub kind: ForwardFilterKind,
    /// `x̂_0..=x̂_K`.
    pub xhat: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    /// `a_1..=a_K`.
    pub actions: Vec<DVector<f64>>,
    pub seconds: f64,
}

/// An inverse filter's output in one run, for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseOutput {
    pub kind: InverseFilterKind,
    pub forward: ForwardFilterKind,
    pub estimates: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub retries: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// True states `x_0..=x_K`.
    pub x: Vec<DVector<f64>>,
    pub forward: Vec<ForwardRun>,
    /// Indexed `[inverse filter][forward filter]`.
    pub inverse: Vec<Vec<InverseOutput>>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> std::result::Result<Self, ExperimentError> {
        config.validate()?;
        let truth_init = config.truth_init.to_dist()?;
        let forward_init = config.forward_init.to_init()?;
        let inverse_init = config.inverse_init.to_dist()?;
        let replica_cov = config.replica_cov_matrix();
        Ok(Self {
            config,
            truth_init,
            forward_init,
            inverse_init,
            replica_cov,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn inverse_init(&self) -> &GaussianDist {
        &self.inverse_init
    }

    pub fn replica_cov(&self) -> &DMatrix<f64> {
        &self.replica_cov
    }

    pub fn stream(&self) -> RngStream {
        RngStream::new(self.config.seed)
    }

    /// System model for one run; the bearing sensor track is drawn per run.
    pub fn model_for_run(&self, stream: &RunStream) -> Result<SystemModel> {
        let init = self.truth_init.clone();
        match &self.config.model {
            ModelConfig::Ungm(p) => ungm_model(p, init),
            ModelConfig::Linear(p) => linear_model(p, init),
            ModelConfig::Bearing(p) => bearing_model(p, SensorTrack::sample(p, self.config.horizon, stream), init),
        }
    }

    pub fn forward_spec(&self, kind: ForwardFilterKind) -> ForwardSpec {
        ForwardSpec {
            kind,
            init: self.forward_init.clone(),
        }
    }

    /// Simulate run `m` and run every configured filter on it.
    pub fn run_single(&self, m: u64) -> Result<RunOutput> {
        let stream = self.stream().run(m);
        let model = self.model_for_run(&stream)?;
        let (x, y) = simulate_truth(&model, self.config.horizon, &stream)?;
        let mut forward = Vec::with_capacity(self.config.forward_filters.len());
        for &kind in &self.config.forward_filters {
            let (out, seconds) = timing_capture(|| run_forward_filter(&model, &self.forward_spec(kind), &y, &stream));
            let (xhat, cov) = out?;
            let actions = observe_actions(&model, &xhat, &stream)?;
            forward.push(ForwardRun {
                kind,
                xhat,
                cov,
                actions,
                seconds,
            });
        }
        let map = EkfMap::new(&model);
        let inverse = self
            .config
            .inverse_filters
            .iter()
            .map(|&kind| {
                forward
                    .iter()
                    .map(|f| self.run_inverse(&map, &model, kind, f.kind, &x, &f.actions, &stream))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunOutput { x, forward, inverse })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_inverse(
        &self,
        map: &EkfMap<'_>,
        model: &SystemModel,
        kind: InverseFilterKind,
        forward: ForwardFilterKind,
        x: &[DVector<f64>],
        a: &[DVector<f64>],
        stream: &RunStream,
    ) -> Result<InverseOutput> {
        match kind {
            InverseFilterKind::Iekf => {
                let init = IekfState::from_dist(&self.inverse_init, self.replica_cov.clone());
                let (out, seconds) = timing_capture(|| run_iekf(map, model, init, x, a));
                let states = out?;
                Ok(InverseOutput {
                    kind,
                    forward,
                    estimates: states.iter().map(|s| s.mean.clone()).collect(),
                    covs: states.into_iter().map(|s| s.cov).collect(),
                    retries: 0,
                    seconds,
                })
            }
            InverseFilterKind::Ipf { particles } => {
                let cfg = IpfConfig {
                    particles,
                    policy: self.config.modification.clone(),
                    resampling: self.config.resampling,
                };
                let obs = InverseObservations::from_model(model);
                let (out, seconds) = timing_capture(|| {
                    run_ipf(map, obs, &cfg, &self.inverse_init, self.replica_cov.clone(), x, a, stream)
                });
                let run = out?;
                Ok(InverseOutput {
                    kind,
                    forward,
                    retries: run.diagnostics.iter().map(|d| d.retries as u64).sum(),
                    estimates: run.estimates,
                    covs: run.covs,
                    seconds,
                })
            }
        }
    }
}

/// A run excluded from the statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub run: u64,
    pub message: String,
}

/// Per-label sequences for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSeries {
    pub label: String,
    pub rmse: Vec<f64>,
    /// Running mean of `rmse`.
    pub rmse_time_avg: Vec<f64>,
    pub nci: Option<Vec<f64>>,
    /// `(run, k)` pairs left out of the NCI because the reported covariance
    /// was singular.
    pub nci_skipped: usize,
    pub relative_error: Option<Vec<f64>>,
    /// Modification-step redraws summed over runs and steps (I-PF only).
    pub retries: Option<u64>,
}

/// Lower-bound sequence `tr(J_k⁻¹)` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSeries {
    pub label: String,
    pub trace: Vec<f64>,
}

impl BoundSeries {
    /// `√tr(J_k⁻¹)`, comparable with RMSE.
    pub fn sqrt(&self) -> Vec<f64> {
        self.trace.iter().map(|v| v.sqrt()).collect()
    }
}

/// Everything determined by `(config, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentMetrics {
    pub scenario: String,
    pub seed: u64,
    pub horizon: usize,
    pub runs: usize,
    pub failures: Vec<RunFailure>,
    pub series: Vec<LabelSeries>,
    pub bounds: Vec<BoundSeries>,
    /// Metrics that could not be computed, with the reason.
    pub notes: Vec<String>,
}

impl ExperimentMetrics {
    pub fn series(&self, label: &str) -> Option<&LabelSeries> {
        self.series.iter().find(|s| s.label == label)
    }

    pub fn bound(&self, label: &str) -> Option<&BoundSeries> {
        self.bounds.iter().find(|s| s.label == label)
    }
}

/// Mean wall-clock seconds per run spent inside one filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelTiming {
    pub label: String,
    pub mean_seconds: f64,
}

/// Metrics plus wall-clock timings. Only `metrics` is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub metrics: ExperimentMetrics,
    pub timing: Vec<LabelTiming>,
}

/// Label of the bound for the forward problem.
pub const FORWARD_BOUND: &str = "RCRLB";
/// Label of the bound for the inverse problem against an EKF attacker.
pub const INVERSE_BOUND: &str = "I-RCRLB-E";

/// Run every configured filter over `config.runs` independent episodes.
///
/// Runs are simulated in parallel and merged in run order. A run in which
/// any filter fails is dropped from every label; more than 10% dropped runs
/// aborts the experiment.
pub fn run_monte_carlo(config: &ScenarioConfig) -> std::result::Result<ExperimentResult, ExperimentError> {
    let scenario = Scenario::new(config.clone())?;
    let results = par::map_tasks(config.runs, |m| scenario.run_single(m as u64));
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (m, r) in results.into_iter().enumerate() {
        match r {
            Ok(out) => ok.push(out),
            Err(e) => failures.push(RunFailure {
                run: m as u64,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() * 10 > config.runs || ok.is_empty() {
        return Err(FilterError::TooManyFailures {
            failed: failures.len(),
            total: config.runs,
            first: failures.first().map(|f| f.message.clone()).unwrap_or_default(),
        }
        .into());
    }
    Ok(summarize(&scenario, &ok, failures))
}

fn label_series(
    label: String,
    agg: &McAggregate,
    position: Option<usize>,
    retries: Option<u64>,
    notes: &mut Vec<String>,
) -> LabelSeries {
    let (nci, nci_skipped) = match nci_skipping_singular(agg) {
        Ok(v) => (Some(v.values), v.skipped.iter().sum()),
        Err(e) => {
            notes.push(format!("{label}: NCI unavailable: {e}"));
            (None, 0)
        }
    };
    let relative_error = position.and_then(|p| match relative_position_error(agg, p) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{label}: relative error unavailable: {e}"));
            None
        }
    });
    LabelSeries {
        rmse: rmse_per_step(agg),
        rmse_time_avg: time_averaged_rmse(agg),
        nci,
        nci_skipped,
        relative_error,
        retries,
        label,
    }
}

fn summarize(scenario: &Scenario, runs: &[RunOutput], failures: Vec<RunFailure>) -> ExperimentResult {
    let cfg = scenario.config();
    let mut notes = Vec::new();
    let mut series = Vec::new();
    let mut timing = Vec::new();
    let n_runs = runs.len() as f64;
    let truth: Vec<Vec<DVector<f64>>> = runs.iter().map(|r| r.x[1..].to_vec()).collect();

    for (fi, kind) in cfg.forward_filters.iter().enumerate() {
        let est = runs.iter().map(|r| r.forward[fi].xhat[1..].to_vec()).collect();
        let covs = runs.iter().map(|r| r.forward[fi].cov[1..].to_vec()).collect();
        let agg = McAggregate::new(est, truth.clone(), Some(covs)).expect("runs share one shape");
        let label = kind.label().to_string();
        series.push(label_series(label.clone(), &agg, cfg.position_index, None, &mut notes));
        timing.push(LabelTiming {
            label,
            mean_seconds: runs.iter().map(|r| r.forward[fi].seconds).sum::<f64>() / n_runs,
        });
    }
    for (ii, inv) in cfg.inverse_filters.iter().enumerate() {
        for (fi, fwd) in cfg.forward_filters.iter().enumerate() {
            let est = runs.iter().map(|r| r.inverse[ii][fi].estimates.clone()).collect();
            let covs = runs.iter().map(|r| r.inverse[ii][fi].covs.clone()).collect();
            let target = runs.iter().map(|r| r.forward[fi].xhat[1..].to_vec()).collect();
            let agg = McAggregate::new(est, target, Some(covs)).expect("runs share one shape");
            let retries = matches!(inv, InverseFilterKind::Ipf { .. })
                .then(|| runs.iter().map(|r| r.inverse[ii][fi].retries).sum());
            let label = inverse_label(*inv, *fwd);
            series.push(label_series(label.clone(), &agg, cfg.position_index, retries, &mut notes));
            timing.push(LabelTiming {
                label,
                mean_seconds: runs.iter().map(|r| r.inverse[ii][fi].seconds).sum::<f64>() / n_runs,
            });
        }
    }

    let bounds = compute_bounds(scenario, runs, &mut notes);
    ExperimentResult {
        metrics: ExperimentMetrics {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            horizon: cfg.horizon,
            runs: cfg.runs,
            failures,
            series,
            bounds,
            notes,
        },
        timing,
    }
}

fn compute_bounds(scenario: &Scenario, runs: &[RunOutput], notes: &mut Vec<String>) -> Vec<BoundSeries> {
    let cfg = scenario.config();
    let mut bounds = Vec::new();
    // the bearing model is rebuilt per run, but the bound needs a single
    // model; use run 0's, which only differs in sensor jitter
    let model = match scenario.model_for_run(&scenario.stream().run(0)) {
        Ok(m) => m,
        Err(e) => {
            notes.push(format!("bounds unavailable: {e}"));
            return bounds;
        }
    };
    if matches!(cfg.model, ModelConfig::Bearing(_)) {
        notes.push(format!(
            "{FORWARD_BOUND}, {INVERSE_BOUND}: not computed, the bearing process noise covariance is singular"
        ));
        return bounds;
    }
    let x: Vec<Vec<DVector<f64>>> = runs.iter().map(|r| r.x.clone()).collect();
    let forward = linalg::inverse(&cfg.truth_init.cov_matrix(), "initial covariance")
        .and_then(|j0| forward_rcrlb(&model, &x, &j0));
    match forward {
        Ok(info) => bounds.push(BoundSeries {
            label: FORWARD_BOUND.into(),
            trace: info.bound[1..].to_vec(),
        }),
        Err(e) => notes.push(format!("{FORWARD_BOUND}: {e}")),
    }
    if let Some(fi) = cfg.forward_filters.iter().position(|k| *k == ForwardFilterKind::Ekf) {
        let xhat: Vec<Vec<DVector<f64>>> = runs.iter().map(|r| r.forward[fi].xhat.clone()).collect();
        let aux: Vec<Vec<DMatrix<f64>>> = runs.iter().map(|r| r.forward[fi].cov.clone()).collect();
        let inverse = linalg::inverse(scenario.inverse_init().cov(), "inverse initial covariance")
            .and_then(|j0| inverse_rcrlb(&EkfMap::new(&model), &model, &x, &xhat, &aux, &j0));
        match inverse {
            Ok(info) => bounds.push(BoundSeries {
                label: INVERSE_BOUND.into(),
                trace: info.bound[1..].to_vec(),
            }),
            Err(e) => notes.push(format!("{INVERSE_BOUND}: {e}")),
        }
    }
    bounds
}
