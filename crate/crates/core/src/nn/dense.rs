//! Fully connected networks with hand-written forward and backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// max(0, z). The subgradient at exactly 0 is taken as 0.
    Rectifier,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Rectifier => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Rectifier => 0,
            Activation::Identity => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Rectifier),
            1 => Ok(Activation::Identity),
            other => Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        }
    }
}

/// One affine layer: `y = act(W x + b)` with `W` stored row-major `out x in`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Layer {
    fn affine(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            z.push(acc);
        }
    }
}

/// A stack of [`Layer`]s evaluated left to right.
#[derive(Debug, Clone)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
}

impl DenseNetwork {
    /// Builds a network with the given layer sizes, fan-in-scaled uniform
    /// weight initialization and zero biases. `sizes` lists every dimension
    /// from input to output; `activations` has one entry per layer.
    pub fn new<R: Rng>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "need >= 2 sizes and one activation per layer, got {} sizes / {} activations",
                sizes.len(),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (idx, act) in activations.iter().enumerate() {
            let in_dim = sizes[idx];
            let out_dim = sizes[idx + 1];
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::ShapeMismatch("zero-sized layer".into()));
            }
            let bound = 1.0 / (in_dim as f64).sqrt();
            let w = (0..in_dim * out_dim)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                w,
                b: vec![0.0; out_dim],
                in_dim,
                out_dim,
                activation: *act,
            });
        }
        Ok(DenseNetwork { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Visits every parameter in a fixed order (per layer: weights then bias).
    /// The same order is used by [`Gradients`], the optimizer, and the
    /// checkpoint container.
    pub fn for_each_param_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        for layer in &mut self.layers {
            for w in &mut layer.w {
                f(w);
            }
            for b in &mut layer.b {
                f(b);
            }
        }
    }

    pub fn for_each_param<F: FnMut(f64)>(&self, mut f: F) {
        for layer in &self.layers {
            for w in &layer.w {
                f(*w);
            }
            for b in &layer.b {
                f(*b);
            }
        }
    }

    pub fn params_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_param(|p| ok &= p.is_finite());
        ok
    }

    pub fn same_shape(&self, other: &DenseNetwork) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }
}

/// Parameter-shaped gradients plus the gradient with respect to the input.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One `(d_weights, d_bias)` pair per layer, shapes matching the network.
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    /// Gradient of the scalar objective with respect to the network input.
    pub input: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
            input: vec![0.0; net.input_dim()],
        }
    }

    /// Accumulates `scale * other` into `self` (parameter part only).
    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for ((dw, db), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in dw.iter_mut().zip(ow) {
                *a += scale * b;
            }
            for (a, b) in db.iter_mut().zip(ob) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_mut(|g| *g *= factor);
    }

    pub fn for_each_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        for (dw, db) in &mut self.layers {
            for g in dw.iter_mut() {
                f(g);
            }
            for g in db.iter_mut() {
                f(g);
            }
        }
    }

    pub fn for_each<F: FnMut(f64)>(&self, mut f: F) {
        for (dw, db) in &self.layers {
            for g in dw.iter() {
                f(*g);
            }
            for g in db.iter() {
                f(*g);
            }
        }
    }

    /// Euclidean norm over the parameter gradients (input gradient excluded).
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each(|g| acc += g * g);
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|g| ok &= g.is_finite());
        ok && self.input.iter().all(|g| g.is_finite())
    }
}

/// Evaluates the network on `x`. Pure function of `(net, x)`.
pub fn forward(net: &DenseNetwork, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} entries, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let mut cur = x.to_vec();
    let mut z = Vec::new();
    for layer in &net.layers {
        layer.affine(&cur, &mut z);
        cur.clear();
        cur.extend(z.iter().map(|&v| layer.activation.apply(v)));
    }
    Ok(cur)
}

/// Forward pass that records per-layer inputs and pre-activations so the
/// backward pass can be replayed.
fn forward_trace(net: &DenseNetwork, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if x.len() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} entries, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut cur = x.to_vec();
    for layer in &net.layers {
        let mut z = Vec::new();
        layer.affine(&cur, &mut z);
        inputs.push(std::mem::take(&mut cur));
        cur = z.iter().map(|&v| layer.activation.apply(v)).collect();
        pre.push(z);
    }
    Ok((cur, inputs, pre))
}

/// Exact reverse-mode gradients of `upstream . forward(net, x)` with respect
/// to every parameter and to the input.
pub fn gradients(net: &DenseNetwork, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    let mut input = vec![0.0; net.input_dim()];
    backward(net, x, upstream, Some(&mut grads), Some(&mut input))?;
    grads.input = input;
    Ok(grads)
}

/// Backward pass accumulating parameter gradients into `params_acc` (when
/// given) and writing the input gradient into `input_out` (when given).
/// Batched updates reuse one accumulator across samples instead of
/// allocating parameter-shaped buffers per call.
pub fn backward(
    net: &DenseNetwork,
    x: &[f64],
    upstream: &[f64],
    mut params_acc: Option<&mut Gradients>,
    input_out: Option<&mut Vec<f64>>,
) -> Result<()> {
    if upstream.len() != net.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "upstream has {} entries, network emits {}",
            upstream.len(),
            net.output_dim()
        )));
    }
    let (_, inputs, pre) = forward_trace(net, x)?;
    let mut delta = upstream.to_vec();
    for (idx, layer) in net.layers.iter().enumerate().rev() {
        let z = &pre[idx];
        let layer_in = &inputs[idx];
        // dL/dz = dL/dy * act'(z)
        for (d, zi) in delta.iter_mut().zip(z.iter()) {
            *d *= layer.activation.derivative(*zi);
        }
        if let Some(acc) = params_acc.as_deref_mut() {
            let (dw, db) = &mut acc.layers[idx];
            for o in 0..layer.out_dim {
                db[o] += delta[o];
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, xi) in row.iter_mut().zip(layer_in.iter()) {
                    *g += delta[o] * xi;
                }
            }
        }
        // dL/dx = W^T dL/dz
        let mut next = vec![0.0; layer.in_dim];
        for o in 0..layer.out_dim {
            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (n, wi) in next.iter_mut().zip(row.iter()) {
                *n += wi * delta[o];
            }
        }
        delta = next;
    }
    if let Some(out) = input_out {
        out.clear();
        out.extend_from_slice(&delta);
    }
    Ok(())
}

/// Gradient of `upstream . forward(net, x)` with respect to the input only.
pub fn input_gradient(net: &DenseNetwork, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    let mut input = vec![0.0; net.input_dim()];
    backward(net, x, upstream, None, Some(&mut input))?;
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(dim: usize, activation: Activation) -> DenseNetwork {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        DenseNetwork {
            layers: vec![Layer {
                w,
                b: vec![0.0; dim],
                in_dim: dim,
                out_dim: dim,
                activation,
            }],
        }
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = identity_layer(3, Activation::Identity);
        let y = forward(&net, &[0.5, -2.0, 7.25]).unwrap();
        assert_eq!(y, vec![0.5, -2.0, 7.25]);
    }

    #[test]
    fn rectifier_zeroes_negatives() {
        let net = identity_layer(2, Activation::Rectifier);
        let y = forward(&net, &[-1.0, 2.0]).unwrap();
        assert_eq!(y, vec![0.0, 2.0]);
    }

    #[test]
    fn two_layer_fixed_weights_match_hand_computation() {
        // layer 1: rectifier, W = [[1, -1], [0.5, 0.5]], b = [0.1, -0.2]
        // layer 2: identity,  W = [[2, 3]], b = [0.25]
        let net = DenseNetwork {
            layers: vec![
                Layer {
                    w: vec![1.0, -1.0, 0.5, 0.5],
                    b: vec![0.1, -0.2],
                    in_dim: 2,
                    out_dim: 2,
                    activation: Activation::Rectifier,
                },
                Layer {
                    w: vec![2.0, 3.0],
                    b: vec![0.25],
                    in_dim: 2,
                    out_dim: 1,
                    activation: Activation::Identity,
                },
            ],
        };
        // x = (0.4, -0.6): z1 = (0.4+0.6+0.1, 0.2-0.3-0.2) = (1.1, -0.3)
        // h = (1.1, 0); y = 2*1.1 + 3*0 + 0.25 = 2.45
        let y = forward(&net, &[0.4, -0.6]).unwrap();
        assert!((y[0] - 2.45).abs() < 1e-15);
    }

    #[test]
    fn scalar_chain_rule() {
        // y = w * x with w = 3, x = 2, upstream 1: d/dw = x, d/dx = w.
        let net = DenseNetwork {
            layers: vec![Layer {
                w: vec![3.0],
                b: vec![0.0],
                in_dim: 1,
                out_dim: 1,
                activation: Activation::Identity,
            }],
        };
        let g = gradients(&net, &[2.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0].0, vec![2.0]);
        assert_eq!(g.input, vec![3.0]);
    }

    #[test]
    fn rectifier_at_zero_uses_zero_subgradient() {
        let net = identity_layer(1, Activation::Rectifier);
        let g = gradients(&net, &[0.0], &[1.0]).unwrap();
        assert_eq!(g.input, vec![0.0]);
        assert_eq!(g.layers[0].0, vec![0.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = identity_layer(2, Activation::Identity);
        assert!(forward(&net, &[1.0]).is_err());
        assert!(gradients(&net, &[1.0, 2.0], &[1.0]).is_err());
    }

    /// Central finite differences on random small networks.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..100 {
            let sizes = [3, 5, 4, 2];
            let acts = [
                Activation::Rectifier,
                Activation::Rectifier,
                Activation::Identity,
            ];
            let mut net = DenseNetwork::new(&sizes, &acts, &mut rng).unwrap();
            // Shift inputs away from rectifier kinks so the FD stencil is valid.
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let upstream: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let analytic = gradients(&net, &x, &upstream).unwrap();

            let objective = |net: &DenseNetwork, x: &[f64]| -> f64 {
                forward(net, x)
                    .unwrap()
                    .iter()
                    .zip(upstream.iter())
                    .map(|(y, u)| y * u)
                    .sum()
            };

            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            for li in 0..net.layers.len() {
                for wi in 0..net.layers[li].w.len() {
                    let orig = net.layers[li].w[wi];
                    net.layers[li].w[wi] = orig + h;
                    let hi = objective(&net, &x);
                    net.layers[li].w[wi] = orig - h;
                    let lo = objective(&net, &x);
                    net.layers[li].w[wi] = orig;
                    let fd = (hi - lo) / (2.0 * h);
                    let got = analytic.layers[li].0[wi];
                    let denom = fd.abs().max(got.abs()).max(1e-6);
                    max_rel = max_rel.max((fd - got).abs() / denom);
                }
            }
            for xi in 0..x.len() {
                let mut xp = x.clone();
                xp[xi] += h;
                let hi = objective(&net, &xp);
                xp[xi] = x[xi] - h;
                let lo = objective(&net, &xp);
                let fd = (hi - lo) / (2.0 * h);
                let got = analytic.input[xi];
                let denom = fd.abs().max(got.abs()).max(1e-6);
                max_rel = max_rel.max((fd - got).abs() / denom);
            }
            assert!(max_rel <= 1e-4, "case {case}: max relative error {max_rel}");
        }
    }

    #[test]
    fn seeded_initialization_is_deterministic() {
        let sizes = [4, 8, 2];
        let acts = [Activation::Rectifier, Activation::Identity];
        let a = DenseNetwork::new(&sizes, &acts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = DenseNetwork::new(&sizes, &acts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.w, lb.w);
            assert_eq!(la.b, lb.b);
        }
    }
}
