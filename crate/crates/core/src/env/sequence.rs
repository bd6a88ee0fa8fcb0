//! Synthetic frame sequences: a seeded log random walk over content
//! complexity with occasional scene-change jumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperbolic exponent range; one draw per frame.
pub const K_MIN: f64 = 0.8;
pub const K_MAX: f64 = 1.5;

/// Latent content/motion complexity of one synthetic frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDescriptor {
    /// Content complexity, clamped to `[c_min, c_max]`.
    pub c: f64,
    /// Hyperbolic exponent in `[K_MIN, K_MAX]`.
    pub k: f64,
    pub scene_change: bool,
    /// True only for frame 0.
    pub intra: bool,
}

/// Parameters of the seeded complexity walk.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub n_frames: usize,
    pub seed: u64,
    /// Complexity of frame 0 (clamped into `[c_min, c_max]`).
    pub c0: f64,
    /// Log-random-walk volatility of `c_t`.
    pub sigma: f64,
    pub scene_change_prob: f64,
    /// Multiplicative complexity jump applied on a scene change.
    pub scene_change_gain: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// Virtual frame dimensions, used only for signaling overhead.
    pub frame_width: u32,
    pub frame_height: u32,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            n_frames: 32,
            seed: 0,
            c0: 1.0,
            sigma: 0.1,
            scene_change_prob: 0.02,
            scene_change_gain: 2.0,
            c_min: 0.2,
            c_max: 5.0,
            frame_width: 1920,
            frame_height: 1080,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvalidSpec("n_frames must be >= 1".into()));
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            return Err(Error::InvalidSpec(format!("c0 must be positive, got {}", self.c0)));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.scene_change_prob) {
            return Err(Error::InvalidSpec(format!(
                "scene_change_prob must lie in [0,1], got {}",
                self.scene_change_prob
            )));
        }
        if !(self.scene_change_gain > 0.0) {
            return Err(Error::InvalidSpec("scene_change_gain must be positive".into()));
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::InvalidSpec(format!(
                "need 0 < c_min < c_max, got [{}, {}]",
                self.c_min, self.c_max
            )));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::InvalidSpec("frame dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_frames(mut self, n: usize) -> Self {
        self.n_frames = n;
        self
    }
}

/// Generates the descriptor list for `spec`.
///
/// The walk draws, for every frame `t` in order, exactly three values from a
/// `ChaCha8` stream seeded with `spec.seed`:
///
/// 1. `z_t` standard normal,
/// 2. `s_t` uniform in `[0, 1)`,
/// 3. `k_t` uniform in `[K_MIN, K_MAX]`.
///
/// Frame 0 takes `c_0 = clamp(c0)` and is marked intra (`z_0`/`s_0` are drawn
/// but unused). For `t >= 1`:
///
/// ```text
/// raw_t = c_{t-1} * exp(sigma * z_t)            // log random walk
/// raw_t *= scene_change_gain   when s_t < scene_change_prob
/// c_t   = clamp(raw_t, c_min, c_max)
/// ```
pub fn new_sequence(spec: &SequenceSpec) -> Result<Vec<FrameDescriptor>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut c_prev = spec.c0.clamp(spec.c_min, spec.c_max);
    for t in 0..spec.n_frames {
        let z: f64 = rng.sample(StandardNormal);
        let s: f64 = rng.gen_range(0.0..1.0);
        let k: f64 = rng.gen_range(K_MIN..=K_MAX);
        if t == 0 {
            frames.push(FrameDescriptor {
                c: c_prev,
                k,
                scene_change: false,
                intra: true,
            });
            continue;
        }
        let mut raw = c_prev * (spec.sigma * z).exp();
        let scene = s < spec.scene_change_prob;
        if scene {
            raw *= spec.scene_change_gain;
        }
        let c = raw.clamp(spec.c_min, spec.c_max);
        frames.push(FrameDescriptor {
            c,
            k,
            scene_change: scene,
            intra: false,
        });
        c_prev = c;
    }
    Ok(frames)
}
