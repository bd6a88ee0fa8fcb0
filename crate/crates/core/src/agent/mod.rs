//! Soft actor-critic agent over the `(lambda, m)` action space: observation
//! assembly, squashed-Gaussian policy, twin critics with delayed targets,
//! and a trajectory replay buffer.

mod critic;
mod features;
mod policy;
mod replay;
mod state;

pub use critic::{
    actor_update, build_critic, critic_target, critic_update, critic_value, soft_update,
    CriticUpdate, TargetNetworks,
};
pub use features::{
    make_provider, EnvFeatures, FeatureProvider, HandcraftedFeatures, LearnedFeatures,
    ProviderKind, RawObservation, RAW_DIM,
};
pub use policy::{
    build_actor, greedy_action, log_prob, log_prob_dim, policy_forward, sample_action,
    ActionSpace, ActionSpaceKind, PolicyOutput, LOG_STD_MAX, LOG_STD_MIN,
};
pub use replay::{ReplayBuffer, Trajectory, Transition};
pub use state::{assemble_state, aux_scalars, AuxScalars, StateVector, AUX_DIM};
