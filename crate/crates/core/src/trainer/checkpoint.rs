//! Trainer-level checkpoint wrapper around the binary container: networks,
//! optimizer states, and the metadata needed to rebuild the policy for
//! inference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{make_provider, ActionSpace, ActionSpaceKind, FeatureProvider, ProviderKind};
use crate::config::RunConfig;
use crate::env::CodecProfile;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, DenseNetwork};

/// Metadata serialized as the checkpoint's JSON meta payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub epoch: usize,
    pub provider: ProviderKind,
    pub action_space: ActionSpaceKind,
    pub state_dim: usize,
    pub r_tar_scale: f64,
    pub validation_score: f64,
    pub profile: CodecProfile,
}

pub const TRAINER_CHECKPOINT_VERSION: u32 = 1;

impl CheckpointMeta {
    pub fn new(cfg: &RunConfig, epoch: usize, validation_score: f64) -> Self {
        let provider = make_provider(cfg.feature_provider, 0);
        CheckpointMeta {
            format_version: TRAINER_CHECKPOINT_VERSION,
            epoch,
            provider: cfg.feature_provider,
            action_space: cfg.action_space,
            state_dim: provider.dim() + crate::agent::AUX_DIM,
            r_tar_scale: cfg.r_tar_scale,
            validation_score,
            profile: cfg.profile(),
        }
    }
}

/// The inference-side view of a checkpoint: actor plus feature provider.
pub struct PolicyArtifact {
    pub actor: DenseNetwork,
    pub provider_net: Option<DenseNetwork>,
    pub meta: CheckpointMeta,
}

impl PolicyArtifact {
    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(&self.meta.profile, self.meta.action_space)
    }

    pub fn provider(&self) -> Box<dyn FeatureProvider> {
        let mut provider = make_provider(self.meta.provider, 0);
        if let Some(net) = &self.provider_net {
            provider.set_network(net.clone());
        }
        provider
    }

    /// Writes the full training state (networks + optimizers + meta).
    pub fn save(&self, path: &Path, agent: &super::AgentState) -> Result<()> {
        let mut ckpt = Checkpoint::new(serde_json::to_string(&self.meta)?);
        ckpt.insert_net("actor", &self.actor);
        ckpt.insert_net("q1", &agent.q1);
        ckpt.insert_net("q2", &agent.q2);
        ckpt.insert_net("target_q1", &agent.targets.q1);
        ckpt.insert_net("target_q2", &agent.targets.q2);
        if let Some(net) = agent.provider.network() {
            ckpt.insert_net("features", net);
        }
        ckpt.insert_opt("actor", &agent.opt_actor);
        ckpt.insert_opt("q1", &agent.opt_q1);
        ckpt.insert_opt("q2", &agent.opt_q2);
        ckpt.save(path)
    }
}

/// Loads the inference policy from a checkpoint; rejects incompatible
/// metadata versions.
pub fn load_policy(path: &Path) -> Result<PolicyArtifact> {
    let ckpt = Checkpoint::load(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&ckpt.meta)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.format_version != TRAINER_CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint format {} unsupported (expected {TRAINER_CHECKPOINT_VERSION})",
            meta.format_version
        )));
    }
    let actor = ckpt.net("actor")?;
    if actor.input_dim() != meta.state_dim {
        return Err(Error::Checkpoint(format!(
            "actor input {} does not match state dim {}",
            actor.input_dim(),
            meta.state_dim
        )));
    }
    let provider_net = ckpt.nets.get("features").cloned();
    Ok(PolicyArtifact {
        actor,
        provider_net,
        meta,
    })
}

/// Loads the complete training state for `--resume`.
pub fn load_agent(path: &Path, cfg: &RunConfig) -> Result<(super::AgentState, CheckpointMeta)> {
    let artifact = load_policy(path)?;
    let ckpt = Checkpoint::load(path)?;
    let mut agent = super::AgentState::new(cfg);
    agent.actor = ckpt.net("actor")?;
    agent.q1 = ckpt.net("q1")?;
    agent.q2 = ckpt.net("q2")?;
    agent.targets.q1 = ckpt.net("target_q1")?;
    agent.targets.q2 = ckpt.net("target_q2")?;
    agent.opt_actor = ckpt.opt("actor")?;
    agent.opt_q1 = ckpt.opt("q1")?;
    agent.opt_q2 = ckpt.opt("q2")?;
    if let Some(net) = ckpt.nets.get("features") {
        agent.provider.set_network(net.clone());
    }
    Ok((agent, artifact.meta))
}
