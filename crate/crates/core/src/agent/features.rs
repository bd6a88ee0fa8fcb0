//! Pluggable feature providers for the intra/inter-frame slots of the state.
//!
//! The pixel-domain extractor of the real system is replaced by providers
//! that map descriptor-derived raw observations to feature slots:
//! - [`EnvFeatures`]: environment descriptors passed through (default),
//! - [`HandcraftedFeatures`]: crude content statistics without any decoded
//!   reference information,
//! - [`LearnedFeatures`]: a small trainable dense embedding, updated from the
//!   critic loss while the curriculum allows it and frozen afterwards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{CouplingParams, EnvState, FrameDescriptor};
use crate::error::Result;
use crate::nn::{adam_step, gradients, Activation, DenseNetwork, Gradients, OptimizerState};

/// Descriptor-derived inputs shared by all providers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawObservation {
    /// `c_t / c_max`.
    pub c_norm: f64,
    pub k: f64,
    /// Scene-change flag as 0/1.
    pub scene: f64,
    /// `c_t / c_{t-1}` (1.0 at the first frame).
    pub c_ratio: f64,
    /// `d_prev / d_ref`.
    pub d_prev_norm: f64,
    /// Unnormalized complexities, for the handcrafted statistics.
    pub c_raw: f64,
    pub c_prev_raw: f64,
}

pub const RAW_DIM: usize = 5;

impl RawObservation {
    pub fn gather(
        frame: &FrameDescriptor,
        prev: Option<&FrameDescriptor>,
        env_state: &EnvState,
        coupling: &CouplingParams,
        c_max: f64,
    ) -> Self {
        let c_prev_raw = prev.map(|p| p.c).unwrap_or(frame.c);
        RawObservation {
            c_norm: frame.c / c_max,
            k: frame.k,
            scene: if frame.scene_change { 1.0 } else { 0.0 },
            c_ratio: frame.c / c_prev_raw,
            d_prev_norm: env_state.d_prev / coupling.d_ref,
            c_raw: frame.c,
            c_prev_raw,
        }
    }

    /// Canonical vector form fed to trainable providers.
    pub fn as_vec(&self) -> [f64; RAW_DIM] {
        [self.c_norm, self.k, self.scene, self.c_ratio, self.d_prev_norm]
    }
}

/// Which provider fills the feature slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    Env,
    Handcrafted,
    Learned,
}

impl ProviderKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "env" => Some(ProviderKind::Env),
            "handcrafted" => Some(ProviderKind::Handcrafted),
            "learned" => Some(ProviderKind::Learned),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProviderKind::Env => "env",
            ProviderKind::Handcrafted => "handcrafted",
            ProviderKind::Learned => "learned",
        }
    }
}

/// Maps raw observations to the feature slots of the state vector.
pub trait FeatureProvider {
    fn dim(&self) -> usize;
    fn features(&self, raw: &RawObservation) -> Vec<f64>;
    fn trainable(&self) -> bool {
        false
    }
    /// Gradient step from upstream gradients w.r.t. the feature slots.
    /// No-op for static providers.
    fn update(&mut self, batch: &[(RawObservation, Vec<f64>)], lr: f64) -> Result<()> {
        let _ = (batch, lr);
        Ok(())
    }
    fn network(&self) -> Option<&DenseNetwork> {
        None
    }
    fn set_network(&mut self, _net: DenseNetwork) {}
}

/// Default provider: the raw descriptor slots themselves.
#[derive(Debug, Default, Clone, Copy)]
pub struct EnvFeatures;

impl FeatureProvider for EnvFeatures {
    fn dim(&self) -> usize {
        RAW_DIM
    }

    fn features(&self, raw: &RawObservation) -> Vec<f64> {
        raw.as_vec().to_vec()
    }
}

/// Crude content statistics (mean/variance analogues of frame and residual)
/// with no decoded-reference information.
#[derive(Debug, Default, Clone, Copy)]
pub struct HandcraftedFeatures;

impl FeatureProvider for HandcraftedFeatures {
    fn dim(&self) -> usize {
        2
    }

    fn features(&self, raw: &RawObservation) -> Vec<f64> {
        let residual = raw.c_raw - raw.c_prev_raw;
        vec![raw.c_raw, residual * residual]
    }
}

/// Small dense embedding over the raw observation.
pub struct LearnedFeatures {
    net: DenseNetwork,
    opt: OptimizerState,
    grad_clip: f64,
}

impl LearnedFeatures {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DenseNetwork::new(
            &[RAW_DIM, 32, RAW_DIM],
            &[Activation::Rectifier, Activation::Identity],
            &mut rng,
        )
        .expect("static sizes");
        let opt = OptimizerState::for_network(&net);
        LearnedFeatures {
            net,
            opt,
            grad_clip: 1.0,
        }
    }
}

impl FeatureProvider for LearnedFeatures {
    fn dim(&self) -> usize {
        RAW_DIM
    }

    fn features(&self, raw: &RawObservation) -> Vec<f64> {
        crate::nn::forward(&self.net, &raw.as_vec()).expect("static sizes")
    }

    fn trainable(&self) -> bool {
        true
    }

    fn update(&mut self, batch: &[(RawObservation, Vec<f64>)], lr: f64) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut acc = Gradients::zeros_like(&self.net);
        for (raw, upstream) in batch {
            let g = gradients(&self.net, &raw.as_vec(), upstream)?;
            acc.accumulate(&g, 1.0);
        }
        acc.scale(1.0 / batch.len() as f64);
        crate::nn::clip_by_global_norm(&mut acc, self.grad_clip);
        adam_step(&mut self.net, &acc, &mut self.opt, lr)
    }

    fn network(&self) -> Option<&DenseNetwork> {
        Some(&self.net)
    }

    fn set_network(&mut self, net: DenseNetwork) {
        self.net = net;
    }
}

/// Builds the provider selected by `kind`.
pub fn make_provider(kind: ProviderKind, seed: u64) -> Box<dyn FeatureProvider> {
    match kind {
        ProviderKind::Env => Box::new(EnvFeatures),
        ProviderKind::Handcrafted => Box::new(HandcraftedFeatures),
        ProviderKind::Learned => Box::new(LearnedFeatures::new(seed)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::CodecProfile;

    fn raw() -> RawObservation {
        let frame = FrameDescriptor {
            c: 1.5,
            k: 1.1,
            scene_change: true,
            intra: false,
        };
        let prev = FrameDescriptor {
            c: 1.0,
            k: 0.9,
            scene_change: false,
            intra: true,
        };
        let mut st = EnvState::initial(&CodecProfile::default(), 20.0, 8);
        st.d_prev = 0.02;
        let coupling = CouplingParams {
            d_ref: 0.01,
            ..CouplingParams::default()
        };
        RawObservation::gather(&frame, Some(&prev), &st, &coupling, 5.0)
    }

    #[test]
    fn env_provider_passes_descriptors_through() {
        let r = raw();
        let f = EnvFeatures.features(&r);
        assert_eq!(f, vec![1.5 / 5.0, 1.1, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn handcrafted_provider_has_no_reference_info() {
        let r = raw();
        let f = HandcraftedFeatures.features(&r);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0], 1.5);
        assert!((f[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn learned_provider_is_deterministic_and_updatable() {
        let r = raw();
        let a = LearnedFeatures::new(7).features(&r);
        let b = LearnedFeatures::new(7).features(&r);
        assert_eq!(a, b);

        let mut p = LearnedFeatures::new(7);
        let before = p.features(&r);
        let upstream = vec![1.0; RAW_DIM];
        p.update(&[(r, upstream)], 1e-2).unwrap();
        let after = p.features(&r);
        assert_ne!(before, after, "update must move the embedding");
    }
}
