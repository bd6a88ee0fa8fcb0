//! Run configuration: one flat `key = value` namespace covering the
//! environment, codec profile, reward, agent, trainer, and evaluation, with
//! defaults for every key, strict unknown-key rejection, `--set` overrides,
//! and JSON persistence of the resolved configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{ActionSpaceKind, ProviderKind};
use crate::env::{CodecProfile, CouplingParams, SequenceSpec};
use crate::error::{Error, Result};
use crate::reward::RewardConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    // Sequence defaults.
    pub n_frames: usize,
    pub c0: f64,
    pub sigma: f64,
    pub scene_change_prob: f64,
    pub scene_change_gain: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub frame_width: u32,
    pub frame_height: u32,

    // Coupling.
    pub a_d: f64,
    pub a_r: f64,
    pub d_ref: f64,
    pub rho: f64,
    pub u: f64,
    pub q: f64,
    pub intra_factor: f64,
    pub signaling_overhead: bool,

    // Codec profile.
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub m_min: f64,
    pub m_max: f64,

    // Reward.
    pub delta: f64,
    pub eta_slope: f64,
    pub eta_final: f64,
    pub over_alloc_gain: f64,
    pub include_rem: bool,
    pub include_acc: bool,
    pub adapt_period: usize,

    // Agent.
    pub feature_provider: ProviderKind,
    pub action_space: ActionSpaceKind,
    pub r_tar_scale: f64,

    // Trainer.
    pub gamma: f64,
    pub xi: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub actor_lr_start: f64,
    pub actor_lr_end: f64,
    pub critic_lr_start: f64,
    pub critic_lr_end: f64,
    pub warmup_epochs: usize,
    pub feature_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub phase1_epochs: usize,
    pub phase1_frames: usize,
    pub phase2_frames: usize,
    pub actor_update_period: usize,
    pub grad_clip: f64,
    pub iterations_per_epoch: usize,
    pub buffer_capacity: usize,
    pub r_tar_min: f64,
    pub r_tar_max: f64,
    pub validation_period: usize,
    pub n_validation_seeds: usize,
    pub seed: u64,

    // Evaluation.
    pub eval_seeds: usize,
    pub eval_n_frames: usize,
    pub n_eval_targets: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let seq = SequenceSpec::default();
        let cp = CouplingParams::default();
        let profile = CodecProfile::default();
        let reward = RewardConfig::default();
        RunConfig {
            n_frames: seq.n_frames,
            c0: seq.c0,
            sigma: seq.sigma,
            scene_change_prob: seq.scene_change_prob,
            scene_change_gain: seq.scene_change_gain,
            c_min: seq.c_min,
            c_max: seq.c_max,
            frame_width: seq.frame_width,
            frame_height: seq.frame_height,
            a_d: cp.a_d,
            a_r: cp.a_r,
            d_ref: cp.d_ref,
            rho: cp.rho,
            u: cp.u,
            q: cp.q,
            intra_factor: cp.intra_factor,
            signaling_overhead: true,
            lambda_min: profile.lambda_min,
            lambda_max: profile.lambda_max,
            m_min: profile.m_min,
            m_max: profile.m_max,
            delta: reward.delta,
            eta_slope: reward.eta_slope,
            eta_final: reward.eta_final,
            over_alloc_gain: reward.over_alloc_gain,
            include_rem: reward.include_rem,
            include_acc: reward.include_acc,
            adapt_period: reward.adapt_period,
            feature_provider: ProviderKind::Env,
            action_space: ActionSpaceKind::LambdaM,
            r_tar_scale: 50.0,
            gamma: 0.98,
            xi: 0.995,
            epsilon_start: 5e-4,
            epsilon_end: 1e-5,
            actor_lr_start: 5e-4,
            actor_lr_end: 5e-5,
            critic_lr_start: 5e-3,
            critic_lr_end: 5e-4,
            warmup_epochs: 5,
            feature_lr: 1e-4,
            batch_size: 32,
            epochs: 300,
            phase1_epochs: 50,
            phase1_frames: 4,
            phase2_frames: 32,
            actor_update_period: 2,
            grad_clip: 1.0,
            iterations_per_epoch: 8,
            buffer_capacity: 200,
            r_tar_min: 12.0,
            r_tar_max: 90.0,
            validation_period: 10,
            n_validation_seeds: 4,
            seed: 0,
            eval_seeds: 50,
            eval_n_frames: 32,
            n_eval_targets: 4,
        }
    }
}

impl RunConfig {
    /// Applies one `key = value` override. Unknown keys and malformed values
    /// are rejected with the offending key in the message.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        macro_rules! set {
            ($field:ident, $parse:expr) => {{
                self.$field = $parse?;
            }};
        }
        match key {
            "n_frames" => set!(n_frames, parse_usize(key, value)),
            "c0" => set!(c0, parse_f64(key, value)),
            "sigma" => set!(sigma, parse_f64(key, value)),
            "scene_change_prob" => set!(scene_change_prob, parse_f64(key, value)),
            "scene_change_gain" => set!(scene_change_gain, parse_f64(key, value)),
            "c_min" => set!(c_min, parse_f64(key, value)),
            "c_max" => set!(c_max, parse_f64(key, value)),
            "frame_width" => set!(frame_width, parse_u32(key, value)),
            "frame_height" => set!(frame_height, parse_u32(key, value)),
            "a_d" => set!(a_d, parse_f64(key, value)),
            "a_r" => set!(a_r, parse_f64(key, value)),
            "d_ref" => set!(d_ref, parse_f64(key, value)),
            "rho" => set!(rho, parse_f64(key, value)),
            "u" => set!(u, parse_f64(key, value)),
            "q" => set!(q, parse_f64(key, value)),
            "intra_factor" => set!(intra_factor, parse_f64(key, value)),
            "signaling_overhead" => set!(signaling_overhead, parse_bool(key, value)),
            "lambda_min" => set!(lambda_min, parse_f64(key, value)),
            "lambda_max" => set!(lambda_max, parse_f64(key, value)),
            "m_min" => set!(m_min, parse_f64(key, value)),
            "m_max" => set!(m_max, parse_f64(key, value)),
            "delta" => set!(delta, parse_f64(key, value)),
            "eta_slope" => set!(eta_slope, parse_f64(key, value)),
            "eta_final" => set!(eta_final, parse_f64(key, value)),
            "over_alloc_gain" => set!(over_alloc_gain, parse_f64(key, value)),
            "include_rem" => set!(include_rem, parse_bool(key, value)),
            "include_acc" => set!(include_acc, parse_bool(key, value)),
            "adapt_period" => set!(adapt_period, parse_usize(key, value)),
            "feature_provider" => {
                self.feature_provider = ProviderKind::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "key '{key}': expected env|handcrafted|learned, got '{value}'"
                    ))
                })?;
            }
            "action_space" => {
                self.action_space = ActionSpaceKind::parse(value).ok_or_else(|| {
                    Error::Config(format!(
                        "key '{key}': expected lambda_m|lambda_only, got '{value}'"
                    ))
                })?;
            }
            "r_tar_scale" => set!(r_tar_scale, parse_f64(key, value)),
            "gamma" => set!(gamma, parse_f64(key, value)),
            "xi" => set!(xi, parse_f64(key, value)),
            "epsilon_start" => set!(epsilon_start, parse_f64(key, value)),
            "epsilon_end" => set!(epsilon_end, parse_f64(key, value)),
            "actor_lr_start" => set!(actor_lr_start, parse_f64(key, value)),
            "actor_lr_end" => set!(actor_lr_end, parse_f64(key, value)),
            "critic_lr_start" => set!(critic_lr_start, parse_f64(key, value)),
            "critic_lr_end" => set!(critic_lr_end, parse_f64(key, value)),
            "warmup_epochs" => set!(warmup_epochs, parse_usize(key, value)),
            "feature_lr" => set!(feature_lr, parse_f64(key, value)),
            "batch_size" => set!(batch_size, parse_usize(key, value)),
            "epochs" => set!(epochs, parse_usize(key, value)),
            "phase1_epochs" => set!(phase1_epochs, parse_usize(key, value)),
            "phase1_frames" => set!(phase1_frames, parse_usize(key, value)),
            "phase2_frames" => set!(phase2_frames, parse_usize(key, value)),
            "actor_update_period" => set!(actor_update_period, parse_usize(key, value)),
            "grad_clip" => set!(grad_clip, parse_f64(key, value)),
            "iterations_per_epoch" => set!(iterations_per_epoch, parse_usize(key, value)),
            "buffer_capacity" => set!(buffer_capacity, parse_usize(key, value)),
            "r_tar_min" => set!(r_tar_min, parse_f64(key, value)),
            "r_tar_max" => set!(r_tar_max, parse_f64(key, value)),
            "validation_period" => set!(validation_period, parse_usize(key, value)),
            "n_validation_seeds" => set!(n_validation_seeds, parse_usize(key, value)),
            "seed" => set!(seed, parse_u64(key, value)),
            "eval_seeds" => set!(eval_seeds, parse_usize(key, value)),
            "eval_n_frames" => set!(eval_n_frames, parse_usize(key, value)),
            "n_eval_targets" => set!(n_eval_targets, parse_usize(key, value)),
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses the flat `key = value` text format ('#' starts a comment).
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; `.json` files are resolved configs, anything
    /// else is the flat text format.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let cfg: RunConfig = serde_json::from_str(&text)?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::parse_text(&text)
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sequence_spec(0).validate()?;
        self.coupling().validate()?;
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max) {
            return Err(Error::Config("need 0 < lambda_min < lambda_max".into()));
        }
        if !(self.m_min > 0.0 && self.m_min <= self.m_max && self.m_max <= 1.0) {
            return Err(Error::Config("need 0 < m_min <= m_max <= 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if !(self.xi >= 0.0 && self.xi <= 1.0) {
            return Err(Error::Config("xi must lie in [0, 1]".into()));
        }
        if self.phase1_epochs >= self.epochs {
            return Err(Error::Config("phase1_epochs must be below epochs".into()));
        }
        if self.batch_size == 0 || self.iterations_per_epoch == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config(
                "batch_size, iterations_per_epoch, buffer_capacity must be positive".into(),
            ));
        }
        if !(self.r_tar_min > 0.0 && self.r_tar_min < self.r_tar_max) {
            return Err(Error::Config("need 0 < r_tar_min < r_tar_max".into()));
        }
        let rates = [
            self.epsilon_start,
            self.epsilon_end,
            self.actor_lr_start,
            self.actor_lr_end,
            self.critic_lr_start,
            self.critic_lr_end,
            self.feature_lr,
            self.grad_clip,
            self.r_tar_scale,
        ];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("rates and scales must be positive".into()));
        }
        Ok(())
    }

    pub fn sequence_spec(&self, seed: u64) -> SequenceSpec {
        SequenceSpec {
            n_frames: self.n_frames,
            seed,
            c0: self.c0,
            sigma: self.sigma,
            scene_change_prob: self.scene_change_prob,
            scene_change_gain: self.scene_change_gain,
            c_min: self.c_min,
            c_max: self.c_max,
            frame_width: self.frame_width,
            frame_height: self.frame_height,
        }
    }

    pub fn coupling(&self) -> CouplingParams {
        CouplingParams {
            a_d: self.a_d,
            a_r: self.a_r,
            d_ref: self.d_ref,
            rho: self.rho,
            u: self.u,
            q: self.q,
            intra_factor: self.intra_factor,
        }
    }

    pub fn profile(&self) -> CodecProfile {
        CodecProfile {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            m_min: self.m_min,
            m_max: self.m_max,
        }
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            delta: self.delta,
            eta_slope: self.eta_slope,
            eta_final: self.eta_final,
            over_alloc_gain: self.over_alloc_gain,
            include_rem: self.include_rem,
            include_acc: self.include_acc,
            adapt_period: self.adapt_period,
        }
    }

    /// Log-spaced lambda anchors spanning the profile.
    pub fn lambda_anchors(&self) -> Vec<f64> {
        let n = self.n_eval_targets.max(2);
        (0..n)
            .map(|i| {
                self.lambda_min
                    * (self.lambda_max / self.lambda_min).powf(i as f64 / (n - 1) as f64)
            })
            .collect()
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("key '{key}': {e}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("key '{key}': {e}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|e| Error::Config(format!("key '{key}': {e}")))
}

fn parse_u32(key: &str, value: &str) -> Result<u32> {
    value
        .parse::<u32>()
        .map_err(|e| Error::Config(format!("key '{key}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "key '{key}': expected true/false, got '{value}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn text_parse_with_comments_and_overrides() {
        let cfg = RunConfig::parse_text(
            "# experiment\n\
             gamma = 0.97   # discount\n\
             epochs = 40\n\
             phase1_epochs = 10\n\
             feature_provider = handcrafted\n",
        )
        .unwrap();
        assert_eq!(cfg.gamma, 0.97);
        assert_eq!(cfg.epochs, 40);
        assert_eq!(cfg.feature_provider, ProviderKind::Handcrafted);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = RunConfig::parse_text("gamma = 0.9\nnot_a_key = 1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("not_a_key"), "{msg}");
    }

    #[test]
    fn malformed_values_are_rejected() {
        assert!(RunConfig::parse_text("gamma = fast\n").is_err());
        assert!(RunConfig::parse_text("gamma 0.9\n").is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg.apply("action_space", "both").is_err());
    }

    #[test]
    fn json_round_trip_preserves_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply("gamma", "0.98").unwrap();
        cfg.apply("seed", "1234").unwrap();
        let path = dir.path().join("resolved_config.json");
        cfg.save_json(&path).unwrap();
        let back = RunConfig::from_file(&path).unwrap();
        assert_eq!(back.gamma, 0.98);
        assert_eq!(back.seed, 1234);
        assert_eq!(
            serde_json::to_string(&back).unwrap(),
            serde_json::to_string(&cfg).unwrap()
        );
    }

    #[test]
    fn invalid_combinations_rejected() {
        let mut cfg = RunConfig::default();
        cfg.phase1_epochs = cfg.epochs;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.lambda_min = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn anchors_are_log_spaced_over_profile() {
        let cfg = RunConfig::default();
        let anchors = cfg.lambda_anchors();
        assert_eq!(anchors.len(), 4);
        assert!((anchors[0] - 256.0).abs() < 1e-9);
        assert!((anchors[3] - 2048.0).abs() < 1e-9);
        let r1 = anchors[1] / anchors[0];
        let r2 = anchors[2] / anchors[1];
        assert!((r1 - r2).abs() < 1e-9);
    }
}
