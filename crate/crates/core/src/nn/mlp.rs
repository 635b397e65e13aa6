//! Feed-forward network with ReLU hidden layers and a linear output layer.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};

/// Multi-layer perceptron. `layer_sizes[0]` is the input width, the last
/// entry the output width; everything in between is a ReLU hidden layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

/// Activations recorded by [`Mlp::forward_cached`], consumed by backprop.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    /// Post-activation output of every layer (last layer is linear).
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds >=1 layer")
    }
}

/// Parameter gradients in the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    /// Gradient with respect to the network input.
    pub input: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpCheckpoint {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    pub fn new(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(NnError::Dimension(format!(
                "layer_sizes must list >=2 positive widths, got {layer_sizes:?}"
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            weights.push(Matrix::xavier(pair[1], pair[0], rng));
            biases.push(vec![0.0; pair[1]]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// All-zero parameters; used by tests and as a deterministic baseline.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut net = Self::new(layer_sizes, &mut rng)?;
        for w in &mut net.weights {
            w.data.fill(0.0);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().expect(">=2 layers")
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.activations.pop().expect("non-empty activation stack"))
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<MlpCache, NnError> {
        if input.len() != self.input_len() {
            return Err(NnError::Dimension(format!(
                "input length {} != expected {}",
                input.len(),
                self.input_len()
            )));
        }
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers);
        let mut current = input.to_vec();
        for (li, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.matvec(&current);
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            if li + 1 < n_layers {
                for zi in z.iter_mut() {
                    if *zi < 0.0 {
                        *zi = 0.0;
                    }
                }
            }
            activations.push(z.clone());
            current = z;
        }
        Ok(MlpCache {
            input: input.to_vec(),
            activations,
        })
    }

    /// Exact backprop through the cached forward pass. `output_grad` is
    /// dLoss/dOutput for the cached input.
    pub fn backward(&self, cache: &MlpCache, output_grad: &[f64]) -> Result<MlpGrads, NnError> {
        if output_grad.len() != self.output_len() {
            return Err(NnError::Dimension(format!(
                "output_grad length {} != expected {}",
                output_grad.len(),
                self.output_len()
            )));
        }
        let n_layers = self.weights.len();
        let mut w_grads: Vec<Matrix> = self
            .weights
            .iter()
            .map(|w| Matrix::zeros(w.rows, w.cols))
            .collect();
        let mut b_grads: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();

        // delta starts as the gradient at the (linear) output layer.
        let mut delta = output_grad.to_vec();
        for li in (0..n_layers).rev() {
            if li + 1 < n_layers {
                // ReLU layer: mask by activation sign.
                for (d, a) in delta.iter_mut().zip(&cache.activations[li]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let upstream: &[f64] = if li == 0 {
                &cache.input
            } else {
                &cache.activations[li - 1]
            };
            w_grads[li].add_outer(&delta, upstream);
            for (bg, d) in b_grads[li].iter_mut().zip(&delta) {
                *bg += d;
            }
            delta = self.weights[li].matvec_t(&delta);
        }
        Ok(MlpGrads {
            weights: w_grads,
            biases: b_grads,
            input: delta,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::Dimension(format!(
                "flat parameter length {} != expected {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            w.data.copy_from_slice(&params[off..off + w.data.len()]);
            off += w.data.len();
            b.copy_from_slice(&params[off..off + b.len()]);
            off += b.len();
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), NnError> {
        let ckpt = MlpCheckpoint {
            layer_sizes: self.layer_sizes.clone(),
            params: self.flat_params(),
        };
        let text = serde_json::to_string(&ckpt)
            .map_err(|e| NnError::Numeric(format!("checkpoint serialize: {e}")))?;
        fs::write(path, text).map_err(|e| NnError::Numeric(format!("checkpoint write: {e}")))
    }

    pub fn load_json(path: &Path) -> Result<Self, NnError> {
        let text =
            fs::read_to_string(path).map_err(|e| NnError::Numeric(format!("checkpoint read: {e}")))?;
        let ckpt: MlpCheckpoint = serde_json::from_str(&text)
            .map_err(|e| NnError::Numeric(format!("checkpoint parse: {e}")))?;
        let mut net = Self::zeros(&ckpt.layer_sizes)?;
        net.set_flat_params(&ckpt.params)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{finite_difference_gradient, max_relative_error};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_single_layer(n: usize) -> Mlp {
        let mut net = Mlp::zeros(&[n, n]).unwrap();
        let mut params = net.flat_params();
        for i in 0..n {
            params[i * n + i] = 1.0;
        }
        net.set_flat_params(&params).unwrap();
        net
    }

    #[test]
    fn identity_layer_reproduces_input() {
        let net = identity_single_layer(4);
        let x = vec![0.5, -1.0, 2.0, 0.0];
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(net.forward(&[9.0, 9.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_matches_independent_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1];
        // Re-implement the forward pass directly from the flat parameters.
        let p = net.flat_params();
        let (w1, rest) = p.split_at(4 * 3);
        let (b1, rest) = rest.split_at(4);
        let (w2, b2) = rest.split_at(2 * 4);
        let mut h = [0.0; 4];
        for i in 0..4 {
            let mut acc = b1[i];
            for j in 0..3 {
                acc += w1[i * 3 + j] * x[j];
            }
            h[i] = acc.max(0.0);
        }
        let mut y = [0.0; 2];
        for i in 0..2 {
            let mut acc = b2[i];
            for j in 0..4 {
                acc += w2[i * 4 + j] * h[j];
            }
            y[i] = acc;
        }
        let out = net.forward(&x).unwrap();
        assert!((out[0] - y[0]).abs() < 1e-12 && (out[1] - y[1]).abs() < 1e-12);
    }

    #[test]
    fn forward_does_not_mutate_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let before = net.flat_params();
        let _ = net.forward(&[1.0, 2.0]).unwrap();
        let _ = net.forward_cached(&[0.5, -0.5]).unwrap();
        assert_eq!(net.flat_params(), before);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let cache = net.forward_cached(&[1.0, 2.0, 3.0]).unwrap();
        let grads = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(grads.weights.iter().all(|w| w.data.iter().all(|&g| g == 0.0)));
        assert!(grads.biases.iter().all(|b| b.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn linear_1x1_gradient_is_analytic() {
        // y = w*x, so dL/dw = x * output_grad.
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        net.set_flat_params(&[0.7, 0.0]).unwrap();
        let cache = net.forward_cached(&[3.0]).unwrap();
        let grads = net.backward(&cache, &[2.0]).unwrap();
        assert!((grads.weights[0].data[0] - 6.0).abs() < 1e-12);
        assert!((grads.biases[0][0] - 2.0).abs() < 1e-12);
        assert!((grads.input[0] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for seed in 0..5u64 {
            let mut shape_rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = [
                shape_rng.random_range(1..6usize),
                shape_rng.random_range(1..8usize),
                shape_rng.random_range(1..4usize),
            ];
            let net = Mlp::new(&sizes, &mut rng).unwrap();
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..sizes[2]).map(|_| rng.random_range(-1.0..1.0)).collect();

            let cache = net.forward_cached(&x).unwrap();
            let analytic = {
                let g = net.backward(&cache, &w).unwrap();
                let mut flat = Vec::new();
                for (wm, b) in g.weights.iter().zip(&g.biases) {
                    flat.extend_from_slice(&wm.data);
                    flat.extend_from_slice(b);
                }
                flat
            };
            let params = net.flat_params();
            let numeric = finite_difference_gradient(
                |p| {
                    let mut probe = net.clone();
                    probe.set_flat_params(p).unwrap();
                    let out = probe.forward(&x).unwrap();
                    out.iter().zip(&w).map(|(o, wi)| o * wi).sum()
                },
                &params,
                1e-5,
            );
            assert!(max_relative_error(&analytic, &numeric) <= 1e-4);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(&[2, 4, 3], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlp.json");
        net.save_json(&path).unwrap();
        let loaded = Mlp::load_json(&path).unwrap();
        assert_eq!(loaded.flat_params(), net.flat_params());
        assert_eq!(loaded.layer_sizes(), net.layer_sizes());
    }
}
