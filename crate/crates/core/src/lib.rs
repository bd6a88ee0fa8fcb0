//! A desk-scale laboratory for frame-by-frame rate control in learned video
//! coding.
//!
//! The crate bundles:
//! - a simulated codec environment with coupled inter-frame rate/distortion
//!   dependencies ([`env`]),
//! - a minimal dense-network substrate with reverse-mode gradients and an
//!   adaptive-moment optimizer ([`nn`]),
//! - a soft actor-critic agent deciding the Lagrange multiplier and a
//!   down-sampling factor per frame ([`agent`]),
//! - classical rate-control baselines and a brute-force oracle ([`baselines`]),
//! - reward shaping for the budget-constrained decision process ([`reward`]),
//! - a training/evaluation harness ([`trainer`]) and metrics ([`metrics`]).

pub mod agent;
pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod reward;
pub mod trainer;

pub use error::{Error, Result};
