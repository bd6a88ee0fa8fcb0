//! Squashed-Gaussian policy over the bounded `(lambda, m)` action space.
//!
//! The actor head emits a mean and a clamped log-std per action dimension.
//! Samples are squashed through `tanh` and affinely mapped into the bounds,
//! so actions are feasible by construction and the log-density carries the
//! exact change-of-variables correction.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{Action, CodecProfile};
use crate::error::{Error, Result};
use crate::nn::{forward, DenseNetwork};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Whether the policy controls only lambda or the joint `(lambda, m)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpaceKind {
    LambdaOnly,
    LambdaM,
}

impl ActionSpaceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lambda_only" => Some(ActionSpaceKind::LambdaOnly),
            "lambda_m" => Some(ActionSpaceKind::LambdaM),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActionSpaceKind::LambdaOnly => "lambda_only",
            ActionSpaceKind::LambdaM => "lambda_m",
        }
    }
}

/// Per-dimension bounds of the continuous action vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    pub bounds: Vec<(f64, f64)>,
    kind: ActionSpaceKind,
    m_fixed: f64,
}

impl ActionSpace {
    pub fn new(profile: &CodecProfile, kind: ActionSpaceKind) -> Self {
        let mut bounds = vec![(profile.lambda_min, profile.lambda_max)];
        if kind == ActionSpaceKind::LambdaM {
            bounds.push((profile.m_min, profile.m_max));
        }
        ActionSpace {
            bounds,
            kind,
            m_fixed: profile.m_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn kind(&self) -> ActionSpaceKind {
        self.kind
    }

    /// Maps pre-squash values to a bounded action.
    pub fn action_from_presquash(&self, u: &[f64]) -> Action {
        let squash = |(lo, hi): (f64, f64), u: f64| lo + (hi - lo) * (u.tanh() + 1.0) / 2.0;
        let lambda = squash(self.bounds[0], u[0]);
        let m = if self.kind == ActionSpaceKind::LambdaM {
            squash(self.bounds[1], u[1])
        } else {
            self.m_fixed
        };
        Action { lambda, m }
    }

    /// Normalizes an action to `[-1, 1]` per dimension for critic
    /// conditioning.
    pub fn normalize(&self, action: Action) -> Vec<f64> {
        let norm = |(lo, hi): (f64, f64), v: f64| 2.0 * (v - lo) / (hi - lo) - 1.0;
        let mut out = vec![norm(self.bounds[0], action.lambda)];
        if self.kind == ActionSpaceKind::LambdaM {
            out.push(norm(self.bounds[1], action.m));
        }
        out
    }
}

/// Actor head output, log-std already clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    /// True per dimension when the raw log-std hit the clamp (gradient gate).
    pub clamped: Vec<bool>,
}

/// Evaluates the actor network: outputs are `[means..., log_stds...]`.
pub fn policy_forward(net: &DenseNetwork, state: &[f64], dim: usize) -> Result<PolicyOutput> {
    let out = forward(net, state)?;
    if out.len() != 2 * dim {
        return Err(Error::ShapeMismatch(format!(
            "policy head emits {} values, expected {}",
            out.len(),
            2 * dim
        )));
    }
    let mean = out[..dim].to_vec();
    let mut log_std = Vec::with_capacity(dim);
    let mut clamped = Vec::with_capacity(dim);
    for &raw in &out[dim..] {
        let c = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        clamped.push(raw != c);
        log_std.push(c);
    }
    Ok(PolicyOutput { mean, log_std, clamped })
}

/// Log-density of the squashed sample `u` (pre-squash coordinates) under the
/// policy output, including the tanh + affine change-of-variables terms.
pub fn log_prob(out: &PolicyOutput, space: &ActionSpace, u: &[f64]) -> f64 {
    (0..space.dim())
        .map(|i| log_prob_dim(out, space, u, i))
        .sum()
}

/// Per-dimension term of [`log_prob`].
pub fn log_prob_dim(out: &PolicyOutput, space: &ActionSpace, u: &[f64], i: usize) -> f64 {
    let (lo, hi) = space.bounds[i];
    let sigma = out.log_std[i].exp();
    let z = (u[i] - out.mean[i]) / sigma;
    let log_normal = -0.5 * z * z - out.log_std[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
    // d a / d u = (hi - lo)/2 * (1 - tanh^2 u); log(1 - tanh^2 u) evaluated
    // stably as 2(ln 2 - u - softplus(-2u)).
    let log_sech2 = 2.0 * (std::f64::consts::LN_2 - u[i] - softplus(-2.0 * u[i]));
    log_normal - ((hi - lo) / 2.0).ln() - log_sech2
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Draws an action from the squashed Gaussian. Returns the action, the
/// pre-squash sample (stored for exact log-prob replay), and the log-prob.
pub fn sample_action<R: Rng>(
    net: &DenseNetwork,
    state: &[f64],
    space: &ActionSpace,
    rng: &mut R,
) -> Result<(Action, Vec<f64>, f64)> {
    let out = policy_forward(net, state, space.dim())?;
    let mut u = Vec::with_capacity(space.dim());
    for i in 0..space.dim() {
        let z: f64 = rng.sample(StandardNormal);
        u.push(out.mean[i] + out.log_std[i].exp() * z);
    }
    let lp = log_prob(&out, space, &u);
    Ok((space.action_from_presquash(&u), u, lp))
}

/// Deterministic inference: the squash of the mean (highest-likelihood
/// action of the squashed Gaussian head).
pub fn greedy_action(net: &DenseNetwork, state: &[f64], space: &ActionSpace) -> Result<Action> {
    let out = policy_forward(net, state, space.dim())?;
    Ok(space.action_from_presquash(&out.mean))
}

/// Builds an actor network for the given state/action dimensions: three
/// rectifier layers of 128 units, linear head over `[means, log_stds]`. The
/// log-std biases start at -1 for moderate initial exploration.
pub fn build_actor<R: Rng>(state_dim: usize, action_dim: usize, rng: &mut R) -> DenseNetwork {
    use crate::nn::Activation::{Identity, Rectifier};
    let mut net = DenseNetwork::new(
        &[state_dim, 128, 128, 128, 2 * action_dim],
        &[Rectifier, Rectifier, Rectifier, Identity],
        rng,
    )
    .expect("static sizes");
    let head = net.layers.last_mut().unwrap();
    for i in action_dim..2 * action_dim {
        head.b[i] = -1.0;
    }
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> ActionSpace {
        ActionSpace::new(&CodecProfile::default(), ActionSpaceKind::LambdaM)
    }

    fn actor(seed: u64, state_dim: usize) -> DenseNetwork {
        build_actor(state_dim, 2, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn squash_of_zero_is_range_midpoint() {
        let sp = space();
        let a = sp.action_from_presquash(&[0.0, 0.0]);
        assert!((a.lambda - 1152.0).abs() < 1e-12);
        assert!((a.m - 0.75).abs() < 1e-12);
    }

    #[test]
    fn greedy_is_deterministic_and_matches_zero_std_limit() {
        let net = actor(3, 6);
        let sp = space();
        let state = vec![0.2, -0.4, 1.0, 0.0, 0.5, 0.1];
        let a1 = greedy_action(&net, &state, &sp).unwrap();
        let a2 = greedy_action(&net, &state, &sp).unwrap();
        assert_eq!(a1, a2);

        // Force log-std towards the clamp floor: sampled action converges to
        // the greedy action.
        let mut net_small = net.clone();
        let head = net_small.layers.last_mut().unwrap();
        for i in 2..4 {
            head.b[i] = -40.0; // clamps to LOG_STD_MIN
            for w in head.w[i * head.in_dim..(i + 1) * head.in_dim].iter_mut() {
                *w = 0.0;
            }
        }
        // std = exp(LOG_STD_MIN) ~ 6.7e-3; the lambda span of 1792 maps a
        // 3-sigma pre-squash wiggle to at most ~20 lambda units.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (sampled, _, _) = sample_action(&net_small, &state, &sp, &mut rng).unwrap();
        let greedy = greedy_action(&net_small, &state, &sp).unwrap();
        assert!((sampled.lambda - greedy.lambda).abs() < 25.0);
        assert!((sampled.m - greedy.m).abs() < 1e-2);
    }

    #[test]
    fn sampled_and_greedy_actions_always_feasible() {
        let sp = space();
        let profile = CodecProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..200 {
            let net = actor(case, 6);
            let state: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (a, _, _) = sample_action(&net, &state, &sp, &mut rng).unwrap();
            assert!(profile.contains(a), "sampled action {a:?} out of bounds");
            let g = greedy_action(&net, &state, &sp).unwrap();
            assert!(profile.contains(g), "greedy action {g:?} out of bounds");
        }
    }

    #[test]
    fn lambda_only_space_fixes_m() {
        let sp = ActionSpace::new(&CodecProfile::default(), ActionSpaceKind::LambdaOnly);
        assert_eq!(sp.dim(), 1);
        let a = sp.action_from_presquash(&[0.3]);
        assert_eq!(a.m, 1.0);
        assert_eq!(sp.normalize(a).len(), 1);
    }

    #[test]
    fn normalized_action_equals_tanh_of_presquash() {
        let sp = space();
        let u = [0.37, -1.2];
        let a = sp.action_from_presquash(&u);
        let n = sp.normalize(a);
        assert!((n[0] - u[0].tanh()).abs() < 1e-12);
        assert!((n[1] - u[1].tanh()).abs() < 1e-12);
    }

    /// Numerical check of the squashed log-density via finite differences of
    /// the Gaussian CDF mapped through the squash (statrs supplies the CDF).
    #[test]
    fn log_prob_matches_numerical_density() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let sp = space();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..50 {
            let mean = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let log_std = [rng.gen_range(-2.0..0.5), rng.gen_range(-2.0..0.5)];
            let out = PolicyOutput {
                mean: mean.to_vec(),
                log_std: log_std.to_vec(),
                clamped: vec![false, false],
            };
            let u = [
                mean[0] + log_std[0].exp() * rng.gen_range(-1.0..1.0),
                mean[1] + log_std[1].exp() * rng.gen_range(-1.0..1.0),
            ];
            for i in 0..2 {
                let (lo, hi) = sp.bounds[i];
                let a = lo + (hi - lo) * (u[i].tanh() + 1.0) / 2.0;
                let gauss = Normal::new(mean[i], log_std[i].exp()).unwrap();
                // CDF of the action: P(squash(U) <= a) = Phi(atanh-coords).
                let to_u = |a: f64| (2.0 * (a - lo) / (hi - lo) - 1.0).atanh();
                let h = (hi - lo) * 1e-6;
                let cdf_hi = gauss.cdf(to_u(a + h));
                let cdf_lo = gauss.cdf(to_u(a - h));
                let numeric = (cdf_hi - cdf_lo) / (2.0 * h);
                let analytic = log_prob_dim(&out, &sp, &u, i).exp();
                let rel = (numeric - analytic).abs() / analytic.abs().max(1e-300);
                assert!(
                    rel < 1e-3,
                    "case {case} dim {i}: numeric {numeric} analytic {analytic}"
                );
            }
        }
    }

    /// The one-dimensional marginal density integrates to 1 on a fine grid.
    #[test]
    fn marginal_density_integrates_to_one() {
        let sp = space();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let out = PolicyOutput {
                mean: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                log_std: vec![rng.gen_range(-1.5..0.5), rng.gen_range(-1.5..0.5)],
                clamped: vec![false, false],
            };
            for i in 0..2 {
                let (lo, hi) = sp.bounds[i];
                let n = 20_000;
                let mut integral = 0.0;
                for j in 0..n {
                    // Midpoint rule in action coordinates.
                    let a = lo + (hi - lo) * (j as f64 + 0.5) / n as f64;
                    let u_i = (2.0 * (a - lo) / (hi - lo) - 1.0).atanh();
                    let mut u = vec![0.0; 2];
                    u[i] = u_i;
                    let dens = log_prob_dim(&out, &sp, &u, i).exp();
                    integral += dens * (hi - lo) / n as f64;
                }
                assert!(
                    (integral - 1.0).abs() < 1e-2,
                    "dim {i} integral {integral}"
                );
            }
        }
    }
}
