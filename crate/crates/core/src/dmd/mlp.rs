//! Dense tanh networks over a flat parameter slice, with hand-written
//! backpropagation. The last layer is linear.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
}

/// Activations of every layer for one input, including the input itself.
pub type Activations = Vec<Vec<f64>>;

impl MlpShape {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        MlpShape { sizes }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weights ~ N(0, 1/fan_in), zero biases, zero last layer so the network
    /// starts as the zero function.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let scale = (1.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = rng.sample(StandardNormal);
                p.push(if l + 1 == layers { 0.0 } else { scale * z });
            }
            p.extend(std::iter::repeat_n(0.0, w[1]));
        }
        p
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Activations {
        debug_assert_eq!(params.len(), self.param_count());
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = &acts[l];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z = bias[o] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                next[o] = if l + 1 == layers { z } else { z.tanh() };
            }
            acts.push(next);
        }
        acts
    }

    /// Adds `dout · ∂out/∂params` into `grad` and returns `dout · ∂out/∂x`.
    pub fn backward(
        &self,
        params: &[f64],
        acts: &Activations,
        dout: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = dout.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let o = offsets[l];
            let prev = &acts[l];
            let mut back = vec![0.0; n_in];
            for j in 0..n_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                let row = o + j * n_in;
                for i in 0..n_in {
                    grad[row + i] += dj * prev[i];
                    back[i] += dj * params[row + i];
                }
                grad[o + n_in * n_out + j] += dj;
            }
            delta = back;
        }
        delta
    }
}
