//! Fixed-architecture multilayer perceptrons with hand-written reverse mode.
//!
//! Hidden layers use ReLU (subgradient 0 at 0). The output layer is either the
//! identity or `b * tanh(z)`. Parameters live in one flat vector laid out layer
//! by layer as `W` (row-major, `out x in`) followed by `b`, which keeps the
//! optimizer, Polyak averaging and checkpointing trivial.
//!
//! Besides the usual parameter/input gradients, [`InputGradTape`] supports the
//! one second-order quantity the critic regularizer needs: the gradient with
//! respect to the weights of a function of the *input gradient*. For a ReLU
//! network with identity output the input gradient is piecewise linear in each
//! weight matrix (the activation masks are locally constant), so this reduces
//! to one extra linear sweep and needs no general double-backprop machinery.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm_ab, gemm_abt, gemm_atb_acc, Matrix};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// `bound * tanh(z)`, so every output lies in `[-bound, bound]`.
    ScaledTanh { bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l`
    /// (post-nonlinearity). The last entry is the network output.
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }
}

/// Parameter and input gradients of `sum_b upstream_b . f(x_b)`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Matrix,
}

/// Backward signals recorded while computing input gradients, kept so the
/// gradient of a penalty on those input gradients can be pulled back to the
/// weights.
#[derive(Debug, Clone)]
pub struct InputGradTape {
    /// Per-sample gradient of `upstream . f` with respect to the input.
    pub input_grads: Matrix,
    /// `signals[l]` is the gradient with respect to the pre-activation of
    /// layer `l` (0-based over weight layers).
    signals: Vec<Matrix>,
    /// ReLU masks of hidden layers (1.0 where active).
    masks: Vec<Matrix>,
}

impl Mlp {
    /// PyTorch-style init: every weight and bias uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_sizes, output)?;
        let mut offset = 0;
        for w in net.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = 1.0 / (n_in as f64).sqrt();
            for p in &mut net.params[offset..offset + n_out * n_in + n_out] {
                *p = rng.random_range(-limit..=limit);
            }
            offset += n_out * n_in + n_out;
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output: OutputActivation) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NnError::Architecture(format!(
                "need at least two positive layer sizes, got {layer_sizes:?}"
            )));
        }
        if let OutputActivation::ScaledTanh { bound } = output {
            if !(bound.is_finite() && bound > 0.0) {
                return Err(NnError::Architecture(format!("tanh bound must be positive, got {bound}")));
            }
        }
        let n: usize = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), output, params: vec![0.0; n] })
    }

    /// Rebuilds a network from a layer-size list and flat parameters.
    pub fn from_params(
        layer_sizes: &[usize],
        output: OutputActivation,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(layer_sizes, output)?;
        if params.len() != net.params.len() {
            return Err(NnError::Shape { expected: net.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NnError::NonFinite("parameters".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offsets of `(W, b)` for weight layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut offset = 0;
        for w in self.layer_sizes.windows(2).take(l) {
            offset += w[0] * w[1] + w[1];
        }
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        (offset, offset + n_out * n_in, n_in, n_out)
    }

    /// `(W, b)` slices for weight layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w, b, n_in, n_out) = self.layer_offsets(l);
        (&self.params[w..w + n_in * n_out], &self.params[b..b + n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b, n_in, n_out) = self.layer_offsets(l);
        let (head, tail) = self.params.split_at_mut(b);
        (&mut head[w..w + n_in * n_out], &mut tail[..n_out])
    }

    fn check_input(&self, x: &Matrix) -> Result<(), NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got: x.cols() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&batch)?.into_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.forward_cached(x)?.activations.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache, NnError> {
        self.check_input(x)?;
        let batch = x.rows();
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(x.clone());
        for l in 0..self.num_layers() {
            let (w, b) = self.layer(l);
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let mut z = Matrix::zeros(batch, n_out);
            gemm_abt(batch, n_in, n_out, activations[l].as_slice(), w, z.as_mut_slice());
            let last = l + 1 == self.num_layers();
            for r in 0..batch {
                let row = z.row_mut(r);
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
                if !last {
                    for v in row.iter_mut() {
                        if *v <= 0.0 {
                            *v = 0.0;
                        }
                    }
                } else if let OutputActivation::ScaledTanh { bound } = self.output {
                    for v in row.iter_mut() {
                        *v = bound * v.tanh();
                    }
                }
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of the pre-activation of the output layer given an upstream
    /// gradient on the output.
    fn output_delta(&self, cache: &ForwardCache, upstream: &Matrix) -> Matrix {
        let mut delta = upstream.clone();
        if let OutputActivation::ScaledTanh { bound } = self.output {
            let y = cache.output();
            for (d, &yv) in delta.as_mut_slice().iter_mut().zip(y.as_slice()) {
                let t = yv / bound;
                *d *= bound * (1.0 - t * t);
            }
        }
        delta
    }

    /// Reverse pass for `sum_b upstream_b . f(x_b)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients, NnError> {
        let batch = cache.batch_size();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(NnError::Shape {
                expected: batch * self.output_dim(),
                got: upstream.rows() * upstream.cols(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = self.output_delta(cache, upstream);
        for l in (0..self.num_layers()).rev() {
            let (w_off, b_off, n_in, n_out) = self.layer_offsets(l);
            let input = &cache.activations[l];
            gemm_atb_acc(
                n_out, batch, n_in,
                delta.as_slice(), input.as_slice(),
                &mut grads[w_off..w_off + n_out * n_in],
            );
            let gb = &mut grads[b_off..b_off + n_out];
            for r in 0..batch {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            let (w, _) = self.layer(l);
            let mut prev = Matrix::zeros(batch, n_in);
            gemm_ab(batch, n_out, n_in, delta.as_slice(), w, prev.as_mut_slice());
            if l > 0 {
                for (p, &a) in prev.as_mut_slice().iter_mut().zip(cache.activations[l].as_slice()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(Gradients { params: grads, input: delta })
    }

    /// `d(upstream . f(x)) / d params` for a single input.
    pub fn grad_params(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>, NnError> {
        let cache = self.forward_cached(&Matrix::from_vec(1, x.len(), x.to_vec())?)?;
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        Ok(self.backward(&cache, &up)?.params)
    }

    /// Jacobian `df/dx` (`output_dim x input_dim`) at a single input.
    pub fn grad_input(&self, x: &[f64]) -> Result<Matrix, NnError> {
        let cache = self.forward_cached(&Matrix::from_vec(1, x.len(), x.to_vec())?)?;
        self.jacobian_rows(&cache, 0)
    }

    /// Jacobian of sample `row` of a cached batch.
    pub fn jacobian_rows(&self, cache: &ForwardCache, row: usize) -> Result<Matrix, NnError> {
        let single = ForwardCache {
            activations: cache
                .activations
                .iter()
                .map(|m| Matrix::from_vec(1, m.cols(), m.row(row).to_vec()))
                .collect::<Result<_, _>>()?,
        };
        let out_dim = self.output_dim();
        let mut jac = Matrix::zeros(out_dim, self.input_dim());
        for k in 0..out_dim {
            let mut up = Matrix::zeros(1, out_dim);
            up.set(0, k, 1.0);
            let g = self.backward(&single, &up)?;
            jac.row_mut(k).copy_from_slice(g.input.row(0));
        }
        Ok(jac)
    }

    /// Input gradients of `upstream_b . f(x_b)` for every sample, with the
    /// bookkeeping needed by [`InputGradTape::param_vjp`]. Only defined for
    /// identity outputs, where the map is piecewise linear in each weight.
    pub fn input_grad_tape(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<InputGradTape, NnError> {
        if self.output != OutputActivation::Identity {
            return Err(NnError::Architecture(
                "input-gradient tape requires an identity output layer".into(),
            ));
        }
        let batch = cache.batch_size();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(NnError::Shape {
                expected: batch * self.output_dim(),
                got: upstream.rows() * upstream.cols(),
            });
        }
        let mut masks = Vec::with_capacity(self.num_layers() - 1);
        for l in 1..self.num_layers() {
            let a = &cache.activations[l];
            let mut m = Matrix::zeros(a.rows(), a.cols());
            for (mv, &av) in m.as_mut_slice().iter_mut().zip(a.as_slice()) {
                *mv = if av > 0.0 { 1.0 } else { 0.0 };
            }
            masks.push(m);
        }
        let mut signals = vec![Matrix::zeros(0, 0); self.num_layers()];
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w, _) = self.layer(l);
            let mut prev = Matrix::zeros(batch, n_in);
            gemm_ab(batch, n_out, n_in, delta.as_slice(), w, prev.as_mut_slice());
            signals[l] = delta;
            if l > 0 {
                for (p, m) in prev.as_mut_slice().iter_mut().zip(masks[l - 1].as_slice()) {
                    *p *= m;
                }
            }
            delta = prev;
        }
        Ok(InputGradTape { input_grads: delta, signals, masks })
    }
}

impl InputGradTape {
    /// Gradient with respect to the network parameters of
    /// `sum_b cotangent_b . input_grads_b`.
    ///
    /// Bias gradients are zero: with locally constant ReLU masks the input
    /// gradient does not depend on the biases.
    pub fn param_vjp(&self, net: &Mlp, cotangent: &Matrix) -> Result<Vec<f64>, NnError> {
        let batch = self.input_grads.rows();
        if cotangent.rows() != batch || cotangent.cols() != net.input_dim() {
            return Err(NnError::Shape {
                expected: batch * net.input_dim(),
                got: cotangent.rows() * cotangent.cols(),
            });
        }
        let mut grads = vec![0.0; net.params.len()];
        // `forward` carries the cotangent up through the linear chain.
        let mut forward = cotangent.clone();
        for l in 0..net.num_layers() {
            let (w_off, _, n_in, n_out) = net.layer_offsets(l);
            gemm_atb_acc(
                n_out, batch, n_in,
                self.signals[l].as_slice(), forward.as_slice(),
                &mut grads[w_off..w_off + n_out * n_in],
            );
            if l + 1 < net.num_layers() {
                let (w, _) = net.layer(l);
                let mut next = Matrix::zeros(batch, n_out);
                gemm_abt(batch, n_in, n_out, forward.as_slice(), w, next.as_mut_slice());
                for (v, m) in next.as_mut_slice().iter_mut().zip(self.masks[l].as_slice()) {
                    *v *= m;
                }
                forward = next;
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_return_bias() {
        let mut net = Mlp::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        net.layer_mut(0).1.copy_from_slice(&[0.5, -1.5]);
        assert_eq!(net.forward(&[7.0, -2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::zeros(&[2, 2], OutputActivation::Identity).unwrap();
        net.layer_mut(0).0.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn hand_computed_two_layer_forward() {
        // h = relu([[1, -1], [0.5, 2]] x + [0, -1]); y = [2, -3] h + 0.25
        let mut net = Mlp::zeros(&[2, 2, 1], OutputActivation::Identity).unwrap();
        {
            let (w, b) = net.layer_mut(0);
            w.copy_from_slice(&[1.0, -1.0, 0.5, 2.0]);
            b.copy_from_slice(&[0.0, -1.0]);
        }
        {
            let (w, b) = net.layer_mut(1);
            w.copy_from_slice(&[2.0, -3.0]);
            b.copy_from_slice(&[0.25]);
        }
        // x = (3, 1): z1 = (2, 1.5 + 2 - 1 = 2.5) -> h = (2, 2.5); y = 4 - 7.5 + 0.25
        assert_eq!(net.forward(&[3.0, 1.0]).unwrap(), vec![-3.25]);
        // x = (0, 1): z1 = (-1, 1) -> h = (0, 1); y = -3 + 0.25
        assert_eq!(net.forward(&[0.0, 1.0]).unwrap(), vec![-2.75]);
    }

    #[test]
    fn input_shape_is_checked() {
        let net = Mlp::zeros(&[3, 1], OutputActivation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(NnError::Shape { expected: 3, got: 1 })));
        assert!(net.grad_input(&[1.0, 2.0]).is_err());
        assert!(net.grad_params(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng).unwrap();
        let g = net.grad_params(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 2], OutputActivation::Identity, &mut rng).unwrap();
        let x = [1.5, -2.0, 0.5];
        let up = [0.3, -0.7];
        let g = net.grad_params(&x, &up).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((g[i * 3 + j] - up[i] * x[j]).abs() < 1e-15);
            }
            assert!((g[6 + i] - up[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_jacobian_is_weight_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 3], OutputActivation::Identity, &mut rng).unwrap();
        let jac = net.grad_input(&[0.3, -9.0, 2.0, 1.0]).unwrap();
        assert_eq!(jac.as_slice(), net.layer(0).0);
    }

    #[test]
    fn dead_relu_layer_gives_zero_jacobian() {
        let mut net = Mlp::zeros(&[2, 3, 1], OutputActivation::Identity).unwrap();
        {
            let (w, b) = net.layer_mut(0);
            w.copy_from_slice(&[1.0, 1.0, 2.0, 0.5, -1.0, 1.0]);
            b.copy_from_slice(&[-100.0, -100.0, -100.0]);
        }
        net.layer_mut(1).0.copy_from_slice(&[1.0, 2.0, 3.0]);
        let jac = net.grad_input(&[1.0, 2.0]).unwrap();
        assert!(jac.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_tanh_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::new(&[2, 8, 2], OutputActivation::ScaledTanh { bound: 3.0 }, &mut rng).unwrap();
        for p in net.params_mut() {
            *p *= 50.0;
        }
        for i in 0..50 {
            let x = [i as f64 - 25.0, (i as f64).sin() * 40.0];
            for y in net.forward(&x).unwrap() {
                assert!(y.abs() <= 3.0);
            }
        }
    }

    #[test]
    fn batched_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 7, 7, 2], OutputActivation::ScaledTanh { bound: 1.5 }, &mut rng).unwrap();
        let rows = [[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0], [3.0, -3.0, 0.0]];
        let batch = net.forward_batch(&Matrix::from_rows(&rows)).unwrap();
        for (r, x) in rows.iter().enumerate() {
            assert_eq!(batch.row(r), net.forward(x).unwrap().as_slice());
        }
    }

    #[test]
    fn tape_requires_identity_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::new(&[2, 3, 1], OutputActivation::ScaledTanh { bound: 1.0 }, &mut rng).unwrap();
        let cache = net.forward_cached(&Matrix::from_rows(&[[0.0, 1.0]])).unwrap();
        assert!(net.input_grad_tape(&cache, &Matrix::filled(1, 1, 1.0)).is_err());
    }

    #[test]
    fn rejects_bad_architectures() {
        assert!(Mlp::zeros(&[3], OutputActivation::Identity).is_err());
        assert!(Mlp::zeros(&[3, 0, 1], OutputActivation::Identity).is_err());
        assert!(Mlp::zeros(&[3, 1], OutputActivation::ScaledTanh { bound: 0.0 }).is_err());
        assert!(Mlp::from_params(&[1, 1], OutputActivation::Identity, vec![f64::NAN, 0.0]).is_err());
    }
}
