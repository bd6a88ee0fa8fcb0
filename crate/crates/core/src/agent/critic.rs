//! Twin critics with delayed targets: target computation, MSE updates, the
//! reparameterized actor objective, and soft target blending.

use rand::Rng;

use crate::agent::policy::{log_prob, policy_forward, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, backward, clip_by_global_norm, forward, input_gradient, Activation, DenseNetwork,
    Gradients, OptimizerState,
};

/// Delayed copies of the twin critics.
#[derive(Debug, Clone)]
pub struct TargetNetworks {
    pub q1: DenseNetwork,
    pub q2: DenseNetwork,
}

/// Builds a critic network over `[state, normalized action]`: three rectifier
/// layers of 128 units and a scalar head.
pub fn build_critic<R: Rng>(state_dim: usize, action_dim: usize, rng: &mut R) -> DenseNetwork {
    use Activation::{Identity, Rectifier};
    DenseNetwork::new(
        &[state_dim + action_dim, 128, 128, 128, 1],
        &[Rectifier, Rectifier, Rectifier, Identity],
        rng,
    )
    .expect("static sizes")
}

/// Q-value of `(state, action)`; the action is fed normalized to `[-1, 1]`.
pub fn critic_value(net: &DenseNetwork, state: &[f64], action_norm: &[f64]) -> Result<f64> {
    let mut input = Vec::with_capacity(state.len() + action_norm.len());
    input.extend_from_slice(state);
    input.extend_from_slice(action_norm);
    Ok(forward(net, &input)?[0])
}

/// Target value for one transition:
/// `y = r + gamma * (1 - done) * (min(Q~1, Q~2)(s', a') - eps * log pi(a'|s'))`
/// with `a'` freshly sampled from the current policy at `s'`.
#[allow(clippy::too_many_arguments)]
pub fn critic_target<R: Rng>(
    reward: f64,
    done: bool,
    next_state: &[f64],
    policy: &DenseNetwork,
    targets: &TargetNetworks,
    space: &ActionSpace,
    gamma: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<f64> {
    if done {
        return Ok(reward);
    }
    let out = policy_forward(policy, next_state, space.dim())?;
    let mut u = Vec::with_capacity(space.dim());
    for i in 0..space.dim() {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        u.push(out.mean[i] + out.log_std[i].exp() * z);
    }
    let lp = log_prob(&out, space, &u);
    let a_norm: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
    let q1 = critic_value(&targets.q1, next_state, &a_norm)?;
    let q2 = critic_value(&targets.q2, next_state, &a_norm)?;
    Ok(reward + gamma * (q1.min(q2) - epsilon * lp))
}

/// Losses and per-sample state-input gradients from one twin-critic update.
pub struct CriticUpdate {
    pub loss_q1: f64,
    pub loss_q2: f64,
    /// Mean over both twins of dLoss/d(state input), one vector per sample;
    /// feeds the trainable feature provider.
    pub state_input_grads: Vec<Vec<f64>>,
}

/// One MSE step of both twins toward the shared targets. `batch` carries
/// `(state, normalized action, y)` rows. Gradients are clipped per network.
#[allow(clippy::too_many_arguments)]
pub fn critic_update(
    batch: &[(Vec<f64>, Vec<f64>, f64)],
    q1: &mut DenseNetwork,
    q2: &mut DenseNetwork,
    opt1: &mut OptimizerState,
    opt2: &mut OptimizerState,
    lr: f64,
    grad_clip: f64,
    want_input_grads: bool,
) -> Result<CriticUpdate> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty critic batch".into()));
    }
    let b = batch.len() as f64;
    let state_dim = batch[0].0.len();
    let mut input = Vec::new();
    let mut input_grads = if want_input_grads {
        Vec::with_capacity(batch.len())
    } else {
        Vec::new()
    };

    let mut step_one = |net: &mut DenseNetwork,
                        opt: &mut OptimizerState,
                        collect: Option<&mut Vec<Vec<f64>>>|
     -> Result<f64> {
        let mut acc = Gradients::zeros_like(net);
        let mut loss = 0.0;
        let mut collected: Vec<Vec<f64>> = Vec::new();
        let mut input_grad = Vec::new();
        for (state, a_norm, y) in batch {
            input.clear();
            input.extend_from_slice(state);
            input.extend_from_slice(a_norm);
            let q = forward(net, &input)?[0];
            let err = q - y;
            loss += err * err / b;
            let input_slot = collect.is_some().then_some(&mut input_grad);
            backward(net, &input, &[2.0 * err / b], Some(&mut acc), input_slot)?;
            if collect.is_some() {
                collected.push(input_grad[..state_dim].to_vec());
            }
        }
        clip_by_global_norm(&mut acc, grad_clip);
        adam_step(net, &acc, opt, lr)?;
        if let Some(out) = collect {
            *out = collected;
        }
        Ok(loss)
    };

    let mut grads1: Vec<Vec<f64>> = Vec::new();
    let loss_q1 = step_one(q1, opt1, want_input_grads.then_some(&mut grads1))?;
    let mut grads2: Vec<Vec<f64>> = Vec::new();
    let loss_q2 = step_one(q2, opt2, want_input_grads.then_some(&mut grads2))?;

    if want_input_grads {
        for (g1, g2) in grads1.iter().zip(&grads2) {
            input_grads.push(g1.iter().zip(g2).map(|(a, b)| (a + b) / 2.0).collect());
        }
    }

    Ok(CriticUpdate {
        loss_q1,
        loss_q2,
        state_input_grads: input_grads,
    })
}

/// Reparameterized actor objective `E[eps * log pi(a|s) - min Q(s, a)]` on a
/// state batch; gradients flow into the policy only. Returns the loss value.
#[allow(clippy::too_many_arguments)]
pub fn actor_update<R: Rng>(
    states: &[Vec<f64>],
    policy: &mut DenseNetwork,
    opt: &mut OptimizerState,
    q1: &DenseNetwork,
    q2: &DenseNetwork,
    space: &ActionSpace,
    epsilon: f64,
    lr: f64,
    grad_clip: f64,
    rng: &mut R,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("empty actor batch".into()));
    }
    let dim = space.dim();
    let b = states.len() as f64;
    let mut acc = Gradients::zeros_like(policy);
    let mut loss = 0.0;
    let mut q_input = Vec::new();
    for state in states {
        let out = policy_forward(policy, state, dim)?;
        let noise: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let u: Vec<f64> = (0..dim)
            .map(|i| out.mean[i] + out.log_std[i].exp() * noise[i])
            .collect();
        let tanh_u: Vec<f64> = u.iter().map(|v| v.tanh()).collect();

        q_input.clear();
        q_input.extend_from_slice(state);
        q_input.extend_from_slice(&tanh_u);
        let v1 = forward(q1, &q_input)?[0];
        let v2 = forward(q2, &q_input)?[0];
        let (q_min, min_net) = if v1 <= v2 { (v1, q1) } else { (v2, q2) };
        // dQ/d(normalized action), through the argmin twin only.
        let q_grad = input_gradient(min_net, &q_input, &[1.0])?;
        let dq_da = &q_grad[state.len()..];

        let lp = log_prob(&out, space, &u);
        loss += (epsilon * lp - q_min) / b;

        // Upstream for the policy head: [d/d mean..., d/d log_std...].
        let mut upstream = vec![0.0; 2 * dim];
        for i in 0..dim {
            let sech2 = 1.0 - tanh_u[i] * tanh_u[i];
            let dlp_du = 2.0 * tanh_u[i]; // from -ln(1 - tanh^2 u)
            let dj_du = epsilon * dlp_du - dq_da[i] * sech2;
            upstream[i] = dj_du / b;
            if !out.clamped[i] {
                let du_dls = out.log_std[i].exp() * noise[i];
                // -eps from d(-ln sigma)/d log_std.
                upstream[dim + i] = (dj_du * du_dls - epsilon) / b;
            }
        }
        backward(policy, state, &upstream, Some(&mut acc), None)?;
    }
    clip_by_global_norm(&mut acc, grad_clip);
    adam_step(policy, &acc, opt, lr)?;
    Ok(loss)
}

/// Exponential blend toward the online parameters with retention `xi`:
/// `target <- (1 - xi) * online + xi * target`.
pub fn soft_update(online: &DenseNetwork, target: &mut DenseNetwork, xi: f64) -> Result<()> {
    if !online.same_shape(target) {
        return Err(Error::ShapeMismatch("soft update across different shapes".into()));
    }
    for (lo, lt) in online.layers.iter().zip(target.layers.iter_mut()) {
        for (o, t) in lo.w.iter().zip(lt.w.iter_mut()) {
            *t = (1.0 - xi) * o + xi * *t;
        }
        for (o, t) in lo.b.iter().zip(lt.b.iter_mut()) {
            *t = (1.0 - xi) * o + xi * *t;
        }
    }
    Ok(())
}
