//! Non-RL rate controllers and a brute-force oracle for small instances.

mod oracle;
mod static_model;

pub use oracle::{
    framewise_uncoupled_optimum, lagrangian_bisection, oracle_search, BisectionResult,
    OracleMode, OracleResult,
};
pub use static_model::{HyperbolicModel, StaticModelController};

use crate::env::{Action, CodecEnv, EnvState, StepOutcome};
use crate::error::{Error, Result};

/// A stateful per-frame decision rule.
pub trait Controller {
    fn reset(&mut self);
    fn decide(&mut self, env: &dyn CodecEnv, state: &EnvState) -> Action;
    /// Called after each frame with the realized outcome.
    fn observe(&mut self, env: &dyn CodecEnv, state: &EnvState, action: Action, outcome: &StepOutcome) {
        let _ = (env, state, action, outcome);
    }
}

/// Emits `(lambda0, m = 1)` for every frame.
#[derive(Debug, Clone, Copy)]
pub struct FixedLambdaPolicy {
    lambda: f64,
}

impl FixedLambdaPolicy {
    pub fn new(lambda: f64, profile: &crate::env::CodecProfile) -> Result<Self> {
        if !(profile.lambda_min..=profile.lambda_max).contains(&lambda) {
            return Err(Error::ActionOutOfBounds(format!(
                "fixed lambda {lambda} outside [{}, {}]",
                profile.lambda_min, profile.lambda_max
            )));
        }
        Ok(FixedLambdaPolicy { lambda })
    }
}

impl Controller for FixedLambdaPolicy {
    fn reset(&mut self) {}

    fn decide(&mut self, _env: &dyn CodecEnv, _state: &EnvState) -> Action {
        Action {
            lambda: self.lambda,
            m: 1.0,
        }
    }
}

/// Outcome of running a controller through a whole episode.
#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub actions: Vec<Action>,
    pub outcomes: Vec<StepOutcome>,
    pub avg_bpp: f64,
    pub mean_d_mse: f64,
}

/// Rolls a controller through the environment from its initial state.
pub fn run_controller(env: &dyn CodecEnv, controller: &mut dyn Controller) -> Result<ControllerRun> {
    controller.reset();
    let mut state = env.initial_state();
    let mut actions = Vec::with_capacity(env.n_frames());
    let mut outcomes = Vec::with_capacity(env.n_frames());
    for t in 0..env.n_frames() {
        state.r_tar = env.target_at(t);
        let action = controller.decide(env, &state);
        let outcome = env.encode_at(&state, action)?;
        controller.observe(env, &state, action, &outcome);
        actions.push(action);
        state = outcome.next_state;
        outcomes.push(outcome);
    }
    let n = env.n_frames() as f64;
    let avg_bpp = outcomes.iter().map(|o| o.r_bpp).sum::<f64>() / n;
    let mean_d_mse = outcomes.iter().map(|o| o.d_mse).sum::<f64>() / n;
    Ok(ControllerRun {
        actions,
        outcomes,
        avg_bpp,
        mean_d_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CodecProfile, CouplingParams, SequenceSpec, SynthEnv};

    #[test]
    fn fixed_lambda_validates_range() {
        let profile = CodecProfile::default();
        assert!(FixedLambdaPolicy::new(100.0, &profile).is_err());
        assert!(FixedLambdaPolicy::new(512.0, &profile).is_ok());
    }

    #[test]
    fn fixed_lambda_emits_constant_actions() {
        let profile = CodecProfile::default();
        let env = SynthEnv::from_spec(
            &SequenceSpec::default().with_seed(3).with_frames(8),
            CouplingParams::default(),
            profile,
            20.0,
            false,
        )
        .unwrap();
        let mut c = FixedLambdaPolicy::new(700.0, &profile).unwrap();
        let run = run_controller(&env, &mut c).unwrap();
        assert!(run.actions.iter().all(|a| a.lambda == 700.0 && a.m == 1.0));
        assert_eq!(run.outcomes.len(), 8);
    }

    #[test]
    fn fixed_lambda_sweep_is_monotone_in_rate_and_quality() {
        let profile = CodecProfile::default();
        let env = SynthEnv::from_spec(
            &SequenceSpec::default().with_seed(5).with_frames(16),
            CouplingParams::default(),
            profile,
            20.0,
            false,
        )
        .unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for lambda in [256.0, 512.0, 1024.0, 2048.0] {
            let mut c = FixedLambdaPolicy::new(lambda, &profile).unwrap();
            let run = run_controller(&env, &mut c).unwrap();
            if let Some((pb, pd)) = prev {
                assert!(run.avg_bpp > pb, "bpp must increase with lambda");
                assert!(run.mean_d_mse < pd, "distortion must decrease");
            }
            prev = Some((run.avg_bpp, run.mean_d_mse));
        }
    }
}
