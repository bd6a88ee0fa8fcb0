//! Adaptive-moment parameter updates and global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::nn::dense::{DenseNetwork, Gradients};

/// First/second moment accumulators for one network, flattened in the
/// network's canonical parameter order.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        OptimizerState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_network(net: &DenseNetwork) -> Self {
        Self::new(net.param_count())
    }
}

/// One bias-corrected adaptive-moment step. Rejects non-finite gradients so
/// the trainer can skip the update and keep the parameters intact.
pub fn adam_step(
    net: &mut DenseNetwork,
    grads: &Gradients,
    opt: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if opt.m.len() != net.param_count() {
        return Err(Error::ShapeMismatch(format!(
            "optimizer tracks {} params, network has {}",
            opt.m.len(),
            net.param_count()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mut flat = Vec::with_capacity(opt.m.len());
    grads.for_each(|g| flat.push(g));
    if flat.len() != opt.m.len() {
        return Err(Error::ShapeMismatch("gradient/parameter count".into()));
    }

    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);

    let mut idx = 0;
    let (beta1, beta2, eps) = (opt.beta1, opt.beta2, opt.eps);
    let (m, v) = (&mut opt.m, &mut opt.v);
    net.for_each_param_mut(|p| {
        let g = flat[idx];
        m[idx] = beta1 * m[idx] + (1.0 - beta1) * g;
        v[idx] = beta2 * v[idx] + (1.0 - beta2) * g * g;
        let m_hat = m[idx] / bc1;
        let v_hat = v[idx] / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
        idx += 1;
    });
    Ok(())
}

/// Scales all gradients by `max_norm / ||g||` when the global norm exceeds
/// `max_norm`; otherwise leaves them untouched.
pub fn clip_by_global_norm(grads: &mut Gradients, max_norm: f64) {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Activation, Layer};

    fn single_param_net(w: f64) -> DenseNetwork {
        DenseNetwork {
            layers: vec![Layer {
                w: vec![w],
                b: vec![0.0],
                in_dim: 1,
                out_dim: 1,
                activation: Activation::Identity,
            }],
        }
    }

    fn grads_with(net: &DenseNetwork, w_grad: f64, b_grad: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.layers[0].0[0] = w_grad;
        g.layers[0].1[0] = b_grad;
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut net = single_param_net(0.7);
        let mut opt = OptimizerState::for_network(&net);
        let g = grads_with(&net, 0.0, 0.0);
        adam_step(&mut net, &g, &mut opt, 1e-3).unwrap();
        assert_eq!(net.layers[0].w[0], 0.7);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // Bias correction makes m_hat = v_hat = 1, so the step is
        // -lr / (1 + eps).
        let mut net = single_param_net(0.0);
        let mut opt = OptimizerState::for_network(&net);
        let g = grads_with(&net, 1.0, 1.0);
        adam_step(&mut net, &g, &mut opt, 1e-3).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((net.layers[0].w[0] - expected).abs() < 1e-15);
        assert!((net.layers[0].b[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_hand_unrolled_recurrence() {
        let mut net = single_param_net(0.0);
        let mut opt = OptimizerState::for_network(&net);
        let g = grads_with(&net, 0.5, 0.0);
        let lr = 1e-2;
        adam_step(&mut net, &g, &mut opt, lr).unwrap();
        adam_step(&mut net, &g, &mut opt, lr).unwrap();

        // Hand unroll with beta1 = 0.9, beta2 = 0.999, eps = 1e-8, g = 0.5.
        let (b1, b2, eps, gr) = (0.9, 0.999, 1e-8, 0.5_f64);
        let mut m = 0.0;
        let mut v = 0.0;
        let mut p = 0.0;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * gr;
            v = b2 * v + (1.0 - b2) * gr * gr;
            let m_hat = m / (1.0 - b1_pow(b1, t));
            let v_hat = v / (1.0 - b1_pow(b2, t));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        assert!((net.layers[0].w[0] - p).abs() < 1e-15);
    }

    fn b1_pow(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn nonfinite_gradient_is_surfaced() {
        let mut net = single_param_net(1.0);
        let mut opt = OptimizerState::for_network(&net);
        let g = grads_with(&net, f64::NAN, 0.0);
        assert!(adam_step(&mut net, &g, &mut opt, 1e-3).is_err());
        // Parameters untouched on rejection.
        assert_eq!(net.layers[0].w[0], 1.0);
    }

    #[test]
    fn clip_below_threshold_is_identity() {
        let net = single_param_net(0.0);
        let mut g = grads_with(&net, 0.3, 0.4); // norm 0.5
        clip_by_global_norm(&mut g, 1.0);
        assert_eq!(g.layers[0].0[0], 0.3);
        assert_eq!(g.layers[0].1[0], 0.4);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let net = single_param_net(0.0);
        let mut g = grads_with(&net, 3.0, 4.0); // norm 5
        clip_by_global_norm(&mut g, 1.0);
        assert!((g.layers[0].0[0] - 0.6).abs() < 1e-15);
        assert!((g.layers[0].1[0] - 0.8).abs() < 1e-15);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clip_never_increases_norm() {
        let net = single_param_net(0.0);
        for i in 0..50 {
            let a = (i as f64) * 0.13 - 3.0;
            let b = (i as f64) * 0.07 + 0.5;
            let mut g = grads_with(&net, a, b);
            let before = g.global_norm();
            clip_by_global_norm(&mut g, 1.0);
            let after = g.global_norm();
            assert!(after <= before + 1e-12);
            assert!(after <= 1.0 + 1e-12);
        }
    }
}
