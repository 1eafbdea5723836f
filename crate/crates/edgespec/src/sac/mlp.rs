//! Minimal dense network with hand-written gradients.
//!
//! The learners in this crate need three things from a function
//! approximator: deterministic forward passes, exact analytic gradients
//! with respect to both parameters and inputs (the policy gradient flows
//! through the critic's action input), and parameters stored as one flat
//! vector so checkpoints and soft target updates are trivial. A small
//! fully-connected network with `tanh` hidden activations and a linear
//! output layer covers all of that without pulling in an autodiff
//! framework.
//!
//! Layout: for each layer `l` mapping `n_in -> n_out`, the flat parameter
//! vector stores the weight matrix row-major (`n_out x n_in`) followed by
//! the bias (`n_out`). Hidden layers apply `tanh`; the final layer is
//! linear.

use rand::Rng;

/// Fully-connected `tanh` network over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths, input first, output last. At least two entries.
    pub sizes: Vec<usize>,
    /// All weights and biases, layer by layer.
    pub params: Vec<f64>,
}

/// Intermediate activations retained for a backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Post-activation values per layer, starting with the input itself.
    activations: Vec<Vec<f64>>,
}

/// Gradients produced by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    /// dLoss/dParams, same layout as [`Mlp::params`].
    pub params: Vec<f64>,
    /// dLoss/dInput.
    pub input: Vec<f64>,
}

impl Mlp {
    /// Number of parameters a network with these layer widths carries.
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Fresh network with uniform Glorot-style initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(
            sizes.len() >= 2 && sizes.iter().all(|&s| s > 0),
            "network needs at least input and output widths, all positive"
        );
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    /// Input width.
    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    /// Output width.
    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Forward pass returning the output only.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).output().to_vec()
    }

    /// Forward pass retaining per-layer activations for [`Self::backward`].
    pub fn forward_cached(&self, input: &[f64]) -> MlpCache {
        assert_eq!(input.len(), self.sizes[0], "input width mismatch");
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let prev = activations.last().unwrap();
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut v = biases[o];
                for (wi, xi) in row.iter().zip(prev.iter()) {
                    v += wi * xi;
                }
                out.push(if l + 1 < layers { v.tanh() } else { v });
            }
            activations.push(out);
        }
        MlpCache { activations }
    }

    /// Backward pass: gradients of a scalar loss with respect to all
    /// parameters and to the input, given dLoss/dOutput.
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64]) -> MlpGrads {
        let layers = self.sizes.len() - 1;
        assert_eq!(d_output.len(), self.output_len(), "output gradient width mismatch");
        let mut d_params = vec![0.0; self.params.len()];
        let mut delta = d_output.to_vec();

        // Walk layers from last to first; `offsets[l]` is where layer l's
        // weights start in the flat vector.
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        for l in (0..layers).rev() {
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            let off = offsets[l];
            let prev = &cache.activations[l];
            let here = &cache.activations[l + 1];

            // Hidden layers were squashed; fold the activation derivative
            // into delta. The output layer is linear.
            if l + 1 < layers {
                for (d, h) in delta.iter_mut().zip(here.iter()) {
                    *d *= 1.0 - h * h;
                }
            }

            let (w_grad, b_grad) =
                d_params[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                b_grad[o] += d;
                let row = &mut w_grad[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(prev.iter()) {
                    *g += d * xi;
                }
            }

            let weights = &self.params[off..off + n_in * n_out];
            let mut d_prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                let row = &weights[o * n_in..(o + 1) * n_in];
                for (dp, wi) in d_prev.iter_mut().zip(row.iter()) {
                    *dp += d * wi;
                }
            }
            delta = d_prev;
        }

        MlpGrads { params: d_params, input: delta }
    }
}

impl MlpCache {
    /// The forward pass output this cache was built from.
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    /// Standard Adam with the usual moment coefficients.
    pub fn new(lr: f64, params: usize) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; params], v: vec![0.0; params], t: 0 }
    }

    /// Learning rate currently applied.
    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// One descent step in place. A zero learning rate leaves parameters
    /// untouched but still advances moment estimates.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter size mismatch");
        assert_eq!(grads.len(), self.m.len(), "optimizer/gradient size mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Polyak average `target = rate * source + (1 - rate) * target`.
///
/// With `rate = 1` the target becomes an exact copy; smaller rates move it
/// geometrically toward the source.
pub fn soft_update(source: &[f64], target: &mut [f64], rate: f64) {
    assert!((0.0..=1.0).contains(&rate) && rate > 0.0, "rate must be in (0, 1]");
    assert_eq!(source.len(), target.len(), "parameter size mismatch");
    for (t, s) in target.iter_mut().zip(source.iter()) {
        *t = rate * s + (1.0 - rate) * *t;
    }
}
