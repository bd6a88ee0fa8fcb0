//! Observation assembly: feature slots plus normalized auxiliary scalars.

use crate::env::{CodecProfile, EnvState};
use crate::error::{Error, Result};

/// Number of auxiliary scalars appended after the feature slots.
pub const AUX_DIM: usize = 7;

/// The agent's observation: `features ++ [poc_norm, r_rem_norm, r_tar_norm,
/// lambda_prev_norm, m_prev_norm, frames_left_norm, first_p_flag]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalized auxiliary scalars derived from the environment state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxScalars(pub [f64; AUX_DIM]);

/// Computes the auxiliary scalars for the frame about to be coded.
///
/// The running-average rate deviation is defined from the second frame on;
/// before any frame is coded it is 0 (trivially on budget). The first-P flag
/// marks `t = 1`: frame 0 is the intra frame.
pub fn aux_scalars(
    env_state: &EnvState,
    profile: &CodecProfile,
    r_tar_scale: f64,
) -> Result<AuxScalars> {
    let n = env_state.n_frames as f64;
    if env_state.t >= env_state.n_frames {
        return Err(Error::InvalidArgument(format!(
            "state assembly past episode end: t={} of {}",
            env_state.t, env_state.n_frames
        )));
    }
    let t = env_state.t as f64;
    let poc_norm = t / n;
    let r_rem_norm = if env_state.t == 0 {
        0.0
    } else {
        (env_state.r_tar - env_state.spent_bpp / t) / env_state.r_tar
    };
    let r_tar_norm = env_state.r_tar / r_tar_scale;
    let lambda_prev_norm =
        (env_state.lambda_prev - profile.lambda_min) / (profile.lambda_max - profile.lambda_min);
    let m_prev_norm = (env_state.m_prev - 0.5) / 0.5;
    let frames_left_norm = (n - t) / n;
    let first_p_flag = if env_state.t == 1 { 1.0 } else { 0.0 };
    let aux = [
        poc_norm,
        r_rem_norm,
        r_tar_norm,
        lambda_prev_norm,
        m_prev_norm,
        frames_left_norm,
        first_p_flag,
    ];
    if aux.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("auxiliary scalars: {aux:?}")));
    }
    Ok(AuxScalars(aux))
}

/// Concatenates feature slots and auxiliary scalars into the observation.
pub fn assemble_state(features: &[f64], aux: &AuxScalars) -> Result<StateVector> {
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature slots".into()));
    }
    let mut v = Vec::with_capacity(features.len() + AUX_DIM);
    v.extend_from_slice(features);
    v.extend_from_slice(&aux.0);
    Ok(StateVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> CodecProfile {
        CodecProfile::default()
    }

    #[test]
    fn boundary_frame_zero() {
        let st = EnvState::initial(&profile(), 20.0, 32);
        let aux = aux_scalars(&st, &profile(), 40.0).unwrap().0;
        assert_eq!(aux[0], 0.0); // poc_norm
        assert_eq!(aux[1], 0.0); // r_rem_norm defined as 0 before any frame
        assert_eq!(aux[5], 1.0); // frames_left_norm
        assert_eq!(aux[6], 0.0); // frame 0 is intra, not the first P frame
    }

    #[test]
    fn first_p_frame_flag() {
        let mut st = EnvState::initial(&profile(), 20.0, 32);
        st.t = 1;
        st.spent_bpp = 20.0;
        let aux = aux_scalars(&st, &profile(), 40.0).unwrap().0;
        assert_eq!(aux[6], 1.0);
        st.t = 2;
        let aux = aux_scalars(&st, &profile(), 40.0).unwrap().0;
        assert_eq!(aux[6], 0.0);
    }

    #[test]
    fn lambda_prev_affine_normalization() {
        let mut st = EnvState::initial(&profile(), 20.0, 32);
        st.t = 2;
        st.spent_bpp = 40.0;
        st.lambda_prev = 1152.0;
        let aux = aux_scalars(&st, &profile(), 40.0).unwrap().0;
        assert!((aux[3] - 0.5).abs() < 1e-15);
        st.m_prev = 0.75;
        let aux = aux_scalars(&st, &profile(), 40.0).unwrap().0;
        assert!((aux[4] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deviation_sign_and_scale() {
        let mut st = EnvState::initial(&profile(), 10.0, 8);
        st.t = 2;
        st.spent_bpp = 22.0; // avg 11 vs target 10 -> over-spend, dev -0.1
        let aux = aux_scalars(&st, &profile(), 40.0).unwrap().0;
        assert!((aux[1] - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn nonfinite_inputs_rejected() {
        let mut st = EnvState::initial(&profile(), 20.0, 32);
        st.t = 1;
        st.spent_bpp = f64::NAN;
        assert!(aux_scalars(&st, &profile(), 40.0).is_err());
        let good = aux_scalars(&EnvState::initial(&profile(), 20.0, 32), &profile(), 40.0).unwrap();
        assert!(assemble_state(&[1.0, f64::INFINITY], &good).is_err());
    }
}
