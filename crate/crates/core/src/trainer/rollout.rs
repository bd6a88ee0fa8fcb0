//! Episodic rollout: state assembly, action selection, coding, reward.

use rand_chacha::ChaCha8Rng;

use crate::agent::{
    assemble_state, aux_scalars, greedy_action, sample_action, ActionSpace, FeatureProvider,
    RawObservation, Trajectory, Transition,
};
use crate::env::{CodecEnv, SynthEnv};
use crate::error::Result;
use crate::nn::DenseNetwork;
use crate::reward::{frame_reward, weight_schedule, RateLedger, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Stochastic policy sample (training).
    Sample,
    /// Highest-likelihood action (inference).
    Greedy,
}

/// Codes one whole sequence with the policy, recording transitions and
/// per-frame rewards. Greedy mode never touches the RNG.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    env: &mut SynthEnv,
    actor: &DenseNetwork,
    provider: &dyn FeatureProvider,
    space: &ActionSpace,
    reward_cfg: &RewardConfig,
    r_tar_scale: f64,
    mode: RolloutMode,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<Trajectory> {
    env.reset();
    let n = env.n_frames();
    let profile = *env.profile();
    let coupling = *env.coupling();
    let c_max = env
        .frames()
        .iter()
        .map(|f| f.c)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1.0);

    let mut raws = Vec::with_capacity(n);
    let mut auxes = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    let mut presquashes = Vec::with_capacity(n);
    let mut total_return = 0.0;

    for t in 0..n {
        let frame = env.frames()[t];
        let prev = if t > 0 { Some(env.frames()[t - 1]) } else { None };
        let raw = RawObservation::gather(&frame, prev.as_ref(), env.state(), &coupling, c_max);
        let aux = aux_scalars(env.state(), &profile, r_tar_scale)?;
        let state = assemble_state(&provider.features(&raw), &aux)?;

        let (action, presquash) = match mode {
            RolloutMode::Sample => {
                let (a, u, _lp) = sample_action(actor, state.as_slice(), space, rng)?;
                (a, u)
            }
            RolloutMode::Greedy => {
                let a = greedy_action(actor, state.as_slice(), space)?;
                // Store the pre-squash mean so replayed log-probs stay exact.
                let u = space
                    .normalize(a)
                    .iter()
                    .map(|v| v.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh())
                    .collect();
                (a, u)
            }
        };

        let r_tar_now = env.state().r_tar;
        let outcome = env.step(action)?;
        let ledger = RateLedger {
            r_tar: r_tar_now,
            spent_bpp: outcome.next_state.spent_bpp,
            t: t + 1,
            n_frames: n,
        };
        let weights = weight_schedule(t + 1, n, reward_cfg);
        let reward = frame_reward(outcome.d_mse, &ledger, &weights)?;
        total_return += reward;

        raws.push(raw);
        auxes.push(aux);
        steps.push(outcome);
        rewards.push(reward);
        actions.push(action);
        presquashes.push(presquash);
    }

    // Terminal next-state fields reuse the last observation; the done flag
    // masks them in every target computation.
    let mut transitions = Vec::with_capacity(n);
    for t in 0..n {
        let (next_raw, next_aux) = if t + 1 < n {
            (raws[t + 1], auxes[t + 1])
        } else {
            (raws[t], auxes[t])
        };
        transitions.push(Transition {
            raw: raws[t],
            aux: auxes[t].0,
            action: actions[t],
            presquash: presquashes[t].clone(),
            reward: rewards[t],
            next_raw,
            next_aux: next_aux.0,
            done: t + 1 == n,
        });
    }

    let achieved_avg_bpp = steps.iter().map(|o| o.r_bpp).sum::<f64>() / n as f64;
    let mean_d_mse = steps.iter().map(|o| o.d_mse).sum::<f64>() / n as f64;
    Ok(Trajectory {
        transitions,
        seed,
        r_tar: env.target_at(0),
        achieved_avg_bpp,
        mean_d_mse,
        total_return,
    })
}
