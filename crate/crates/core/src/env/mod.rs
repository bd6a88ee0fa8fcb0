//! Simulated codec environment.
//!
//! Per-frame rate and distortion follow a hyperbolic model driven by a
//! latent content complexity, with explicit coupled inter-frame dependencies:
//! a degraded decoded reference inflates both the effective complexity
//! (distortion propagation) and the rate of the next frame. Larger lambda
//! means higher rate and quality; the R-D slope magnitude is `1/lambda`.

mod sequence;
mod table;
mod trace;

pub use sequence::{new_sequence, FrameDescriptor, SequenceSpec, K_MAX, K_MIN};
pub use table::{tabulated_encode, RdTable};
pub use trace::{target_bitrate, BandwidthTrace, TraceSegment};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint action: Lagrange multiplier and down-sampling factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub lambda: f64,
    pub m: f64,
}

/// Lambda/m bounds of the codec being simulated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CodecProfile {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub m_min: f64,
    pub m_max: f64,
}

impl Default for CodecProfile {
    fn default() -> Self {
        CodecProfile {
            lambda_min: 256.0,
            lambda_max: 2048.0,
            m_min: 0.5,
            m_max: 1.0,
        }
    }
}

impl CodecProfile {
    pub fn contains(&self, action: Action) -> bool {
        action.lambda.is_finite()
            && action.m.is_finite()
            && action.lambda >= self.lambda_min
            && action.lambda <= self.lambda_max
            && action.m >= self.m_min
            && action.m <= self.m_max
    }

    pub fn lambda_mid(&self) -> f64 {
        0.5 * (self.lambda_min + self.lambda_max)
    }
}

/// Inter-frame coupling strengths. `a_d = a_r = 0` yields a memoryless
/// environment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Distortion-propagation strength (complexity inflation).
    pub a_d: f64,
    /// Rate-dependency strength.
    pub a_r: f64,
    /// Normalizing reference distortion (MSE units).
    pub d_ref: f64,
    /// Rate exponent of the down-sampling factor.
    pub rho: f64,
    /// Upsampling-loss gain.
    pub u: f64,
    /// Upsampling-loss exponent.
    pub q: f64,
    /// Complexity multiplier for the intra frame.
    pub intra_factor: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        CouplingParams {
            a_d: 0.5,
            a_r: 0.3,
            // Keeps d_prev / d_ref of order one at the profile's operating
            // points, the drift regime the coupling is meant to model;
            // much smaller values send fixed-lambda sweeps into a runaway
            // where sequence bitrate decreases with lambda.
            d_ref: 0.05,
            rho: 1.5,
            u: 4e-3,
            q: 2.0,
            intra_factor: 3.0,
        }
    }
}

impl CouplingParams {
    pub fn memoryless(mut self) -> Self {
        self.a_d = 0.0;
        self.a_r = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a_d,
            self.a_r,
            self.d_ref,
            self.rho,
            self.u,
            self.q,
            self.intra_factor,
        ];
        if all.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidSpec("coupling params must be nonnegative".into()));
        }
        if self.d_ref <= 0.0 || self.rho <= 0.0 || self.q <= 0.0 || self.intra_factor <= 0.0 {
            return Err(Error::InvalidSpec(
                "d_ref, rho, q, intra_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Decoded-reference context plus the budget ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    /// Frame index (0-based POC).
    pub t: usize,
    /// MSE of the decoded reference (normalized-pixel units).
    pub d_prev: f64,
    pub lambda_prev: f64,
    pub m_prev: f64,
    /// Cumulative sum of emitted frame rates (bpp * frames).
    pub spent_bpp: f64,
    /// Current target bitrate (bpp).
    pub r_tar: f64,
    pub n_frames: usize,
}

impl EnvState {
    pub fn initial(profile: &CodecProfile, r_tar: f64, n_frames: usize) -> Self {
        EnvState {
            t: 0,
            d_prev: 0.0,
            lambda_prev: profile.lambda_min,
            m_prev: profile.m_max,
            spent_bpp: 0.0,
            r_tar,
            n_frames,
        }
    }
}

/// Result of coding one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Frame rate including signaling overhead (bpp).
    pub r_bpp: f64,
    /// Frame distortion after any upsampling (MSE).
    pub d_mse: f64,
    pub next_state: EnvState,
    pub done: bool,
}

/// Per-frame signaling cost of transmitting `(lambda, m)`, in bpp.
///
/// The lambda field uses `ceil(log2(span + 1))` bits on the integer lambda
/// span; the m field uses 6 bits.
pub fn signaling_overhead_bpp(profile: &CodecProfile, frame_dims: (u32, u32)) -> Result<f64> {
    let (w, h) = frame_dims;
    let pixels = w as u64 * h as u64;
    if pixels == 0 {
        return Err(Error::InvalidArgument("zero-area frame dims".into()));
    }
    let span = (profile.lambda_max - profile.lambda_min).round();
    if span < 0.0 || !span.is_finite() {
        return Err(Error::InvalidArgument("bad lambda span".into()));
    }
    let levels = span as u64 + 1;
    let bits_lambda = ceil_log2(levels);
    let bits_m = 6u32;
    Ok((bits_lambda + bits_m) as f64 / pixels as f64)
}

fn ceil_log2(n: u64) -> u32 {
    debug_assert!(n >= 1);
    n.next_power_of_two().trailing_zeros()
}

/// Codes one frame under the hyperbolic model with reference coupling.
///
/// ```text
/// C_t     = c_t * intra_factor                  (intra)
///         = c_t * (1 + a_d * d_prev / d_ref)    (inter)
/// R_base  = (C_t * k_t * lambda)^(1/(k_t+1))
/// D_base  = C_t * R_base^(-k_t)
/// R1      = R_base * (1 + a_r * d_prev / d_ref) (inter only)
/// R_t     = m^rho * R1 + overhead_bpp
/// D_t     = D_base + u * c_t * (1 - m)^q
/// ```
///
/// Actions outside the profile are rejected, never clamped.
pub fn encode_frame(
    state: &EnvState,
    frame: &FrameDescriptor,
    action: Action,
    cp: &CouplingParams,
    profile: &CodecProfile,
    overhead_bpp: f64,
) -> Result<StepOutcome> {
    if !profile.contains(action) {
        return Err(Error::ActionOutOfBounds(format!(
            "lambda={} m={} outside [{}, {}] x [{}, {}]",
            action.lambda,
            action.m,
            profile.lambda_min,
            profile.lambda_max,
            profile.m_min,
            profile.m_max
        )));
    }
    if state.t >= state.n_frames {
        return Err(Error::InvalidArgument(format!(
            "episode finished: t={} of {}",
            state.t, state.n_frames
        )));
    }

    let c_eff = if frame.intra {
        frame.c * cp.intra_factor
    } else {
        frame.c * (1.0 + cp.a_d * state.d_prev / cp.d_ref)
    };
    let r_base = (c_eff * frame.k * action.lambda).powf(1.0 / (frame.k + 1.0));
    let d_base = c_eff * r_base.powf(-frame.k);
    let r1 = if frame.intra {
        r_base
    } else {
        r_base * (1.0 + cp.a_r * state.d_prev / cp.d_ref)
    };
    let r_bpp = action.m.powf(cp.rho) * r1 + overhead_bpp;
    let d_mse = d_base + cp.u * frame.c * (1.0 - action.m).powf(cp.q);

    let next_t = state.t + 1;
    let next_state = EnvState {
        t: next_t,
        d_prev: d_mse,
        lambda_prev: action.lambda,
        m_prev: action.m,
        spent_bpp: state.spent_bpp + r_bpp,
        r_tar: state.r_tar,
        n_frames: state.n_frames,
    };
    Ok(StepOutcome {
        r_bpp,
        d_mse,
        next_state,
        done: next_t == state.n_frames,
    })
}

/// Replayable environment: a pure transition function over [`EnvState`].
pub trait CodecEnv {
    fn n_frames(&self) -> usize;
    fn profile(&self) -> &CodecProfile;
    fn initial_state(&self) -> EnvState;
    fn frame(&self, t: usize) -> &FrameDescriptor;
    /// Codes frame `state.t` without mutating the environment.
    fn encode_at(&self, state: &EnvState, action: Action) -> Result<StepOutcome>;

    /// Target bitrate seen at frame `t` (trace-aware).
    fn target_at(&self, t: usize) -> f64 {
        let _ = t;
        self.initial_state().r_tar
    }
}

/// Analytic environment over a fixed descriptor list.
#[derive(Debug, Clone)]
pub struct SynthEnv {
    frames: Vec<FrameDescriptor>,
    coupling: CouplingParams,
    profile: CodecProfile,
    overhead_bpp: f64,
    r_tar: f64,
    trace: Option<BandwidthTrace>,
    state: EnvState,
}

impl SynthEnv {
    pub fn from_spec(
        spec: &SequenceSpec,
        coupling: CouplingParams,
        profile: CodecProfile,
        r_tar: f64,
        with_overhead: bool,
    ) -> Result<Self> {
        coupling.validate()?;
        let frames = new_sequence(spec)?;
        let overhead_bpp = if with_overhead {
            signaling_overhead_bpp(&profile, (spec.frame_width, spec.frame_height))?
        } else {
            0.0
        };
        Ok(Self::from_descriptors(
            frames,
            coupling,
            profile,
            r_tar,
            overhead_bpp,
        ))
    }

    pub fn from_descriptors(
        frames: Vec<FrameDescriptor>,
        coupling: CouplingParams,
        profile: CodecProfile,
        r_tar: f64,
        overhead_bpp: f64,
    ) -> Self {
        let n = frames.len();
        SynthEnv {
            frames,
            coupling,
            profile,
            overhead_bpp,
            r_tar,
            trace: None,
            state: EnvState::initial(&profile, r_tar, n),
        }
    }

    /// Drives the target bitrate from a trace instead of the constant target.
    pub fn with_trace(mut self, trace: BandwidthTrace) -> Self {
        self.state.r_tar = target_bitrate(&trace, 0);
        self.trace = Some(trace);
        self
    }

    pub fn set_target(&mut self, r_tar: f64) {
        self.r_tar = r_tar;
        self.trace = None;
        self.reset();
    }

    pub fn reset(&mut self) -> EnvState {
        self.state = EnvState::initial(&self.profile, self.target_at(0), self.frames.len());
        self.state
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn coupling(&self) -> &CouplingParams {
        &self.coupling
    }

    pub fn overhead_bpp(&self) -> f64 {
        self.overhead_bpp
    }

    pub fn frames(&self) -> &[FrameDescriptor] {
        &self.frames
    }

    /// Codes the current frame and advances the internal state.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let mut outcome = self.encode_at(&self.state, action)?;
        outcome.next_state.r_tar = self.target_at(outcome.next_state.t.min(self.frames.len() - 1));
        self.state = outcome.next_state;
        Ok(outcome)
    }
}

impl CodecEnv for SynthEnv {
    fn n_frames(&self) -> usize {
        self.frames.len()
    }

    fn profile(&self) -> &CodecProfile {
        &self.profile
    }

    fn initial_state(&self) -> EnvState {
        EnvState::initial(&self.profile, self.target_at(0), self.frames.len())
    }

    fn frame(&self, t: usize) -> &FrameDescriptor {
        &self.frames[t]
    }

    fn encode_at(&self, state: &EnvState, action: Action) -> Result<StepOutcome> {
        encode_frame(
            state,
            &self.frames[state.t],
            action,
            &self.coupling,
            &self.profile,
            self.overhead_bpp,
        )
    }

    fn target_at(&self, t: usize) -> f64 {
        match &self.trace {
            Some(trace) => target_bitrate(trace, t),
            None => self.r_tar,
        }
    }
}
