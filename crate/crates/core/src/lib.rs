//! Inverse particle filtering for counter-adversarial systems.
//!
//! A defender knows its own state trajectory `x_k` and observes noisy
//! actions `a_k` of an attacker who tracks `x_k` with a forward filter. The
//! inverse filters here estimate the attacker's estimate `x̂_k`.

pub mod benchmarks;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod scenarios;
pub mod simulate;

pub use error::{ConfigError, FilterError, Result};
