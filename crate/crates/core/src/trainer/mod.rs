//! Training and inference orchestration: episodic rollouts into the replay
//! buffer, twin-critic and delayed-actor updates with soft target blending,
//! the two-phase sequence-length curriculum, validation-monitored
//! checkpointing, and greedy evaluation.

mod checkpoint;
mod eval;
mod rollout;

pub use checkpoint::{load_agent, load_policy, CheckpointMeta, PolicyArtifact};
pub use eval::{evaluate, evaluate_controller, EvalReport, EvalSuite, SegmentEval, SequenceEval};
pub use rollout::{rollout, RolloutMode};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    actor_update, build_actor, build_critic, critic_target, critic_update, make_provider,
    soft_update, ActionSpace, FeatureProvider, ReplayBuffer, TargetNetworks, Transition, AUX_DIM,
};
use crate::config::RunConfig;
use crate::env::SynthEnv;
use crate::error::{Error, Result};
use crate::nn::{lr_at, DenseNetwork, LrSchedule, OptimizerState};
use crate::reward::{NoopWeightAdapt, WeightAdapt};

/// Derives independent RNG stream seeds from a base seed and a role tag.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 over a mixed word.
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed-stream tags; evaluation seeds live in a different stream than
/// training episodes so held-out sets stay held out.
pub const SEED_TAG_TRAIN: u64 = 1;
pub const SEED_TAG_VALIDATION: u64 = 2;
pub const SEED_TAG_EVAL: u64 = 3;
pub const SEED_TAG_INIT: u64 = 4;
pub const SEED_TAG_UPDATE: u64 = 5;

/// One training-log row (`train_log.csv` schema).
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub epoch: usize,
    pub iter: usize,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_return: f64,
    pub epsilon: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
}

pub const TRAIN_LOG_HEADER: &str =
    "epoch,iter,actor_loss,critic_loss,mean_return,epsilon,lr_actor,lr_critic";

pub fn write_train_log(rows: &[LogRow], path: &Path) -> Result<()> {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.epoch, r.iter, r.actor_loss, r.critic_loss, r.mean_return, r.epsilon, r.lr_actor,
            r.lr_critic
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_train_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(TRAIN_LOG_HEADER) {
        return Err(Error::InvalidArgument(format!(
            "train log must start with '{TRAIN_LOG_HEADER}'"
        )));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::InvalidArgument("train log row width".into()));
        }
        rows.push(LogRow {
            epoch: cols[0].parse().map_err(|_| bad_log())?,
            iter: cols[1].parse().map_err(|_| bad_log())?,
            actor_loss: cols[2].parse().map_err(|_| bad_log())?,
            critic_loss: cols[3].parse().map_err(|_| bad_log())?,
            mean_return: cols[4].parse().map_err(|_| bad_log())?,
            epsilon: cols[5].parse().map_err(|_| bad_log())?,
            lr_actor: cols[6].parse().map_err(|_| bad_log())?,
            lr_critic: cols[7].parse().map_err(|_| bad_log())?,
        });
    }
    Ok(rows)
}

fn bad_log() -> Error {
    Error::InvalidArgument("malformed train log value".into())
}

/// Everything `train` leaves behind.
pub struct TrainOutputs {
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub log: Vec<LogRow>,
    /// Per-episode sampled targets, for range-coverage checks.
    pub sampled_targets: Vec<(usize, f64)>,
    pub best_validation_score: f64,
}

/// Live networks plus optimizer state.
pub struct AgentState {
    pub actor: DenseNetwork,
    pub q1: DenseNetwork,
    pub q2: DenseNetwork,
    pub targets: TargetNetworks,
    pub opt_actor: OptimizerState,
    pub opt_q1: OptimizerState,
    pub opt_q2: OptimizerState,
    pub provider: Box<dyn FeatureProvider>,
    pub space: ActionSpace,
}

impl AgentState {
    pub fn new(cfg: &RunConfig) -> Self {
        let provider = make_provider(
            cfg.feature_provider,
            derive_seed(cfg.seed, SEED_TAG_INIT, 0),
        );
        let space = ActionSpace::new(&cfg.profile(), cfg.action_space);
        let state_dim = provider.dim() + AUX_DIM;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_TAG_INIT, 1));
        let actor = build_actor(state_dim, space.dim(), &mut rng);
        let q1 = build_critic(state_dim, space.dim(), &mut rng);
        let q2 = build_critic(state_dim, space.dim(), &mut rng);
        let targets = TargetNetworks {
            q1: q1.clone(),
            q2: q2.clone(),
        };
        AgentState {
            opt_actor: OptimizerState::for_network(&actor),
            opt_q1: OptimizerState::for_network(&q1),
            opt_q2: OptimizerState::for_network(&q2),
            actor,
            q1,
            q2,
            targets,
            provider,
            space,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.provider.dim() + AUX_DIM
    }

    pub fn policy_artifact(&self, cfg: &RunConfig, epoch: usize, val: f64) -> PolicyArtifact {
        PolicyArtifact {
            actor: self.actor.clone(),
            provider_net: self.provider.network().cloned(),
            meta: CheckpointMeta::new(cfg, epoch, val),
        }
    }
}

/// Flattens sampled trajectories into update rows: `(s, s', a_norm, r, done)`
/// with feature slots rebuilt by the current provider.
struct UpdateBatch {
    states: Vec<Vec<f64>>,
    next_states: Vec<Vec<f64>>,
    action_norms: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    raws: Vec<crate::agent::RawObservation>,
}

fn build_update_batch(
    transitions: &[&Transition],
    provider: &dyn FeatureProvider,
) -> Result<UpdateBatch> {
    let mut batch = UpdateBatch {
        states: Vec::with_capacity(transitions.len()),
        next_states: Vec::with_capacity(transitions.len()),
        action_norms: Vec::with_capacity(transitions.len()),
        rewards: Vec::with_capacity(transitions.len()),
        dones: Vec::with_capacity(transitions.len()),
        raws: Vec::with_capacity(transitions.len()),
    };
    for tr in transitions {
        let s = crate::agent::assemble_state(&provider.features(&tr.raw), &tr.aux_scalars())?;
        let s_next = crate::agent::assemble_state(
            &provider.features(&tr.next_raw),
            &tr.next_aux_scalars(),
        )?;
        batch.states.push(s.0);
        batch.next_states.push(s_next.0);
        batch
            .action_norms
            .push(tr.presquash.iter().map(|u| u.tanh()).collect());
        batch.rewards.push(tr.reward);
        batch.dones.push(tr.done);
        batch.raws.push(tr.raw);
    }
    Ok(batch)
}

/// Runs the full training loop and writes checkpoints, the training log, and
/// the resolved config under `out_dir`.
pub fn train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutputs> {
    train_with_adapt(cfg, out_dir, &mut NoopWeightAdapt)
}

pub fn train_with_adapt(
    cfg: &RunConfig,
    out_dir: &Path,
    adapt: &mut dyn WeightAdapt,
) -> Result<TrainOutputs> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    cfg.save_json(&out_dir.join("resolved_config.json"))?;

    let mut agent = AgentState::new(cfg);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.batch_size);
    let mut reward_cfg = cfg.reward();

    let eps_schedule = LrSchedule::new(cfg.epsilon_start, cfg.epsilon_end, cfg.epochs, 0);
    let actor_schedule = LrSchedule::new(
        cfg.actor_lr_start,
        cfg.actor_lr_end,
        cfg.epochs,
        cfg.warmup_epochs,
    );
    let critic_schedule = LrSchedule::new(
        cfg.critic_lr_start,
        cfg.critic_lr_end,
        cfg.epochs,
        cfg.warmup_epochs,
    );

    let mut log = Vec::new();
    let mut sampled_targets = Vec::new();
    let mut last_actor_loss = 0.0;
    let mut global_iter: usize = 0;
    let mut consecutive_failures = 0usize;
    let mut training_steps = 0usize;
    let mut best_val = f64::INFINITY;
    let best_path = out_dir.join("best.ckpt");
    let final_path = out_dir.join("final.ckpt");

    let coupling = cfg.coupling();
    let profile = cfg.profile();

    for epoch in 0..cfg.epochs {
        let frames = if epoch < cfg.phase1_epochs {
            cfg.phase1_frames
        } else {
            cfg.phase2_frames
        };
        let epsilon = lr_at(&eps_schedule, epoch);
        let lr_actor = lr_at(&actor_schedule, epoch);
        let lr_critic = lr_at(&critic_schedule, epoch);
        let feature_phase = agent.provider.trainable() && epoch < cfg.phase1_epochs;

        for iter in 0..cfg.iterations_per_epoch {
            let episode = derive_seed(cfg.seed, SEED_TAG_TRAIN, global_iter as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(episode, SEED_TAG_UPDATE, 0));

            // Episode target: log-uniform over the configured range.
            let log_lo = cfg.r_tar_min.ln();
            let log_hi = cfg.r_tar_max.ln();
            let r_tar = (log_lo + (log_hi - log_lo) * rng.gen_range(0.0..1.0)).exp();
            sampled_targets.push((epoch, r_tar));

            let mut spec = cfg.sequence_spec(derive_seed(episode, SEED_TAG_UPDATE, 1));
            spec.n_frames = frames;
            let mut env = SynthEnv::from_spec(
                &spec,
                coupling,
                profile,
                r_tar,
                cfg.signaling_overhead,
            )?;
            let trajectory = rollout(
                &mut env,
                &agent.actor,
                agent.provider.as_ref(),
                &agent.space,
                &reward_cfg,
                cfg.r_tar_scale,
                RolloutMode::Sample,
                &mut rng,
                spec.seed,
            )?;
            let mean_return = trajectory.total_return;
            buffer.push(trajectory);

            let sampled = buffer.sample(&mut rng)?;
            let transitions: Vec<&Transition> = sampled
                .iter()
                .flat_map(|t| t.transitions.iter())
                .collect();
            let batch = build_update_batch(&transitions, agent.provider.as_ref())?;

            // Targets under the delayed critics and current policy.
            let mut critic_rows = Vec::with_capacity(batch.states.len());
            for i in 0..batch.states.len() {
                let y = critic_target(
                    batch.rewards[i],
                    batch.dones[i],
                    &batch.next_states[i],
                    &agent.actor,
                    &agent.targets,
                    &agent.space,
                    cfg.gamma,
                    epsilon,
                    &mut rng,
                )?;
                critic_rows.push((
                    batch.states[i].clone(),
                    batch.action_norms[i].clone(),
                    y,
                ));
            }

            let step = critic_update(
                &critic_rows,
                &mut agent.q1,
                &mut agent.q2,
                &mut agent.opt_q1,
                &mut agent.opt_q2,
                lr_critic,
                cfg.grad_clip,
                feature_phase,
            );
            let critic_loss = match step {
                Ok(upd) => {
                    consecutive_failures = 0;
                    if feature_phase {
                        let slots = agent.provider.dim();
                        let pairs: Vec<_> = batch
                            .raws
                            .iter()
                            .zip(&upd.state_input_grads)
                            .map(|(raw, g)| (*raw, g[..slots].to_vec()))
                            .collect();
                        agent.provider.update(&pairs, cfg.feature_lr)?;
                    }
                    (upd.loss_q1 + upd.loss_q2) / 2.0
                }
                Err(Error::NonFinite(what)) => {
                    consecutive_failures += 1;
                    if consecutive_failures > 100 {
                        return Err(Error::NonFinite(format!(
                            "aborting after {consecutive_failures} consecutive bad steps ({what})"
                        )));
                    }
                    f64::NAN
                }
                Err(e) => return Err(e),
            };

            if global_iter % cfg.actor_update_period == 0 {
                match actor_update(
                    &batch.states,
                    &mut agent.actor,
                    &mut agent.opt_actor,
                    &agent.q1,
                    &agent.q2,
                    &agent.space,
                    epsilon,
                    lr_actor,
                    cfg.grad_clip,
                    &mut rng,
                ) {
                    Ok(loss) => {
                        consecutive_failures = 0;
                        last_actor_loss = loss;
                    }
                    Err(Error::NonFinite(_)) => {
                        consecutive_failures += 1;
                        if consecutive_failures > 100 {
                            return Err(Error::NonFinite(
                                "aborting after repeated non-finite actor losses".into(),
                            ));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }

            soft_update(&agent.q1, &mut agent.targets.q1, cfg.xi)?;
            soft_update(&agent.q2, &mut agent.targets.q2, cfg.xi)?;

            training_steps += 1;
            if reward_cfg.adapt_period > 0 && training_steps % reward_cfg.adapt_period == 0 {
                adapt.adapt(training_steps, &mut reward_cfg, None);
            }

            log.push(LogRow {
                epoch,
                iter,
                actor_loss: last_actor_loss,
                critic_loss,
                mean_return,
                epsilon,
                lr_actor,
                lr_critic,
            });
            global_iter += 1;
        }

        let last_epoch = epoch + 1 == cfg.epochs;
        if cfg.validation_period > 0 && ((epoch + 1) % cfg.validation_period == 0 || last_epoch) {
            let score = validation_score(cfg, &agent)?;
            if score < best_val {
                best_val = score;
                agent
                    .policy_artifact(cfg, epoch, score)
                    .save(&best_path, &agent)?;
            }
        }
    }

    let final_score = validation_score(cfg, &agent)?;
    if final_score < best_val {
        best_val = final_score;
        agent
            .policy_artifact(cfg, cfg.epochs, final_score)
            .save(&best_path, &agent)?;
    }
    agent
        .policy_artifact(cfg, cfg.epochs, final_score)
        .save(&final_path, &agent)?;

    let log_path = out_dir.join("train_log.csv");
    write_train_log(&log, &log_path)?;

    Ok(TrainOutputs {
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        log_path,
        log,
        sampled_targets,
        best_validation_score: best_val,
    })
}

/// Greedy validation on held-out seeds at per-sequence anchored targets:
/// mean over runs of `delta * mean distortion + delta_r percent`.
fn validation_score(cfg: &RunConfig, agent: &AgentState) -> Result<f64> {
    let artifact = agent.policy_artifact(cfg, 0, 0.0);
    let seeds: Vec<u64> = (0..cfg.n_validation_seeds as u64)
        .map(|i| derive_seed(cfg.seed, SEED_TAG_VALIDATION, i))
        .collect();
    let suite = EvalSuite {
        seeds,
        anchored_targets: true,
        explicit_targets: Vec::new(),
        n_frames: cfg.phase2_frames,
        trace: None,
    };
    let report = evaluate(&artifact, cfg, &suite)?;
    let mut score = 0.0;
    for seq in &report.per_sequence {
        score += cfg.delta * seq.mean_d_mse + seq.delta_r_pct;
    }
    Ok(score / report.per_sequence.len().max(1) as f64)
}
