//! Estimation-quality and credibility metrics.

pub mod aggregate;
pub mod rcrlb;
pub mod timing;

pub use aggregate::{
    nci, nci_skipping_singular, relative_position_error, rmse_per_step, running_mean, time_averaged_rmse, McAggregate,
    NciSeries,
};
pub use rcrlb::{forward_rcrlb, inverse_rcrlb, rcrlb_recursion, FisherInfo, FisherSample, FisherTerms};
pub use timing::timing_capture;
