//! Inverse filters: the defender's estimators of the attacker's estimate.

pub mod iekf;
pub mod ipf;
pub mod map;

pub use iekf::{iekf_step, iekf_update, linearize_map, run_iekf, IekfState, MapLinearization};
pub use ipf::{
    expectation_under_ensemble, ipf_estimate, ipf_modification, ipf_resample, ipf_sis, ipf_step, ipf_weight_update,
    modification_accepts, run_ipf, run_ipf_until, weight_from_log_likelihoods, Estimand, InverseEnsemble,
    InverseObservations, InverseParticle, InverseRun, IpfConfig, IpfDiagnostics, IpfStepOutput, ModificationOutcome,
    ModificationPolicy, Phase,
};
pub use map::{EkfMap, ForwardMap, IdentityMap};
