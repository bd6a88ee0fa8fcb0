//! Per-frame reward: a weighted inner product of distortion and rate
//! deviation, with a scheduled rate weight, a strict terminal rate term, and
//! an over-allocation multiplier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snapshot of the budget ledger after `t` encoded frames.
#[derive(Debug, Clone, Copy)]
pub struct RateLedger {
    pub r_tar: f64,
    pub spent_bpp: f64,
    /// Frames encoded so far.
    pub t: usize,
    pub n_frames: usize,
}

/// Weights applied to one frame's reward terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    /// Distortion weight (delta).
    pub delta: f64,
    /// Rate-deviation weight (eta) for this frame.
    pub eta: f64,
    /// Multiplier applied to the rate term when over budget (zeta >= 1).
    pub over_alloc_gain: f64,
}

/// Reward configuration. The three reward-design ablation variants are
/// expressed through `include_rem` (per-frame rate term) and `include_acc`
/// (terminal rate term).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardConfig {
    pub delta: f64,
    /// Mid-sequence eta is `eta_slope * poc / n_frames`.
    pub eta_slope: f64,
    /// Eta at the final frame.
    pub eta_final: f64,
    pub over_alloc_gain: f64,
    pub include_rem: bool,
    pub include_acc: bool,
    /// Period (training steps) of the weight-adaptation hook; 0 disables it.
    pub adapt_period: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            delta: 40.0,
            eta_slope: 20.0,
            eta_final: 200.0,
            over_alloc_gain: 2.0,
            include_rem: true,
            include_acc: true,
            adapt_period: 0,
        }
    }
}

/// Hook invoked every `adapt_period` training steps. The validation-driven
/// adaptation law is intentionally left unimplemented; the default keeps the
/// fixed schedule.
pub trait WeightAdapt {
    fn adapt(&mut self, training_step: usize, cfg: &mut RewardConfig, validation_score: Option<f64>);
}

/// Default adaptation hook: keeps the configured schedule untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoopWeightAdapt;

impl WeightAdapt for NoopWeightAdapt {
    fn adapt(&mut self, _: usize, _: &mut RewardConfig, _: Option<f64>) {}
}

/// Deviation of the running average rate from the target; positive means
/// under-spend. Requires at least one encoded frame.
pub fn remaining_rate_deviation(ledger: &RateLedger) -> Result<f64> {
    if ledger.t == 0 {
        return Err(Error::InvalidArgument(
            "remaining-rate deviation undefined before the first frame".into(),
        ));
    }
    Ok(ledger.r_tar - ledger.spent_bpp / ledger.t as f64)
}

/// Weights for frame `poc` (1-based; `poc = n_frames` is the final frame).
pub fn weight_schedule(poc: usize, n_frames: usize, cfg: &RewardConfig) -> RewardWeights {
    debug_assert!(poc >= 1 && poc <= n_frames);
    let eta = if poc == n_frames {
        if cfg.include_acc {
            cfg.eta_final
        } else if cfg.include_rem {
            cfg.eta_slope * poc as f64 / n_frames as f64
        } else {
            0.0
        }
    } else if cfg.include_rem {
        cfg.eta_slope * poc as f64 / n_frames as f64
    } else {
        0.0
    };
    RewardWeights {
        delta: cfg.delta,
        eta,
        over_alloc_gain: cfg.over_alloc_gain,
    }
}

/// Reward for a frame with distortion `d_mse` under the given ledger. Always
/// nonpositive; zero only for zero distortion exactly on budget.
pub fn frame_reward(d_mse: f64, ledger: &RateLedger, weights: &RewardWeights) -> Result<f64> {
    if !(ledger.r_tar > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target bitrate must be positive, got {}",
            ledger.r_tar
        )));
    }
    if d_mse < 0.0 {
        return Err(Error::InvalidArgument("distortion must be nonnegative".into()));
    }
    let dev = remaining_rate_deviation(ledger)?;
    let mut rate_term = weights.eta * dev.abs() / ledger.r_tar;
    if dev < 0.0 {
        rate_term *= weights.over_alloc_gain;
    }
    Ok(-(weights.delta * d_mse + rate_term))
}
