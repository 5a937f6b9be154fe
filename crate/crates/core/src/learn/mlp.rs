//! Dense tanh MLP with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out × in`) followed by the bias vector. Hidden layers use
//! tanh, the output layer is linear.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LearnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] }
    }

    /// Gaussian init with std `gain / sqrt(fan_in)` per layer (the last layer
    /// uses `out_gain`), zero biases.
    pub fn random(sizes: &[usize], out_gain: f64, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes);
        let n_layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == n_layers { out_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, LearnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(LearnError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(LearnError::Shape(format!(
                "expected {expected} parameters for {sizes:?}, got {}",
                params.len()
            )));
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, LearnError> {
        if input.len() != self.input_dim() {
            return Err(LearnError::Shape(format!(
                "input length {} does not match layer width {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut cache = MlpCache::default();
        self.forward_cached(input, &mut cache);
        Ok(cache.acts.pop().unwrap())
    }

    /// Forward pass keeping every layer's activation. `input` must have the
    /// right length.
    pub fn forward_cached(&self, input: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(input.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        cache.acts.resize_with(n_layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut rest[0];
            y.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                y.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            off += n_in * n_out + n_out;
        }
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut delta = d_out.to_vec();
        let mut off = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            if l + 1 < n_layers {
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let x = &cache.acts[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                gb[o] += d;
                if d != 0.0 {
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *p += d * wi;
                        }
                    }
                }
                delta = prev;
            }
        }
    }
}
