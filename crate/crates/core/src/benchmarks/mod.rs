//! Experiment scenarios, the Monte Carlo runner and the convergence and
//! timing studies.

pub mod config;
pub mod convergence;
pub mod runner;
pub mod timing;

pub use config::{
    build_bearing, build_linear, build_ungm, builtin, inverse_label, ForwardInitConfig, GaussianSpec,
    InverseFilterKind, ModelConfig, ScenarioConfig, BUILTIN_SCENARIOS, DEFAULT_SEED,
};
pub use convergence::{
    convergence_study, linear_fit, spearman_p_lower, spearman_rho, ConvergenceConfig, ConvergenceLevel,
    ConvergenceResult,
};
pub use runner::{
    run_monte_carlo, BoundSeries, ExperimentError, ExperimentMetrics, ExperimentResult, ForwardRun, InverseOutput,
    LabelSeries, LabelTiming, RunFailure, RunOutput, Scenario, FORWARD_BOUND, INVERSE_BOUND,
};
pub use timing::{ipf_timing_label, timing_study, TimingSeries, TimingStudy, TimingStudyConfig};
