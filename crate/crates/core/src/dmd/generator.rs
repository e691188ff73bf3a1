use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::MlpShape;
use crate::error::{Error, Result};

pub const STUDENT_STEPS: usize = 4;
/// Noise levels the student starts each of its steps from.
pub const DEFAULT_STUDENT_SIGMAS: [f64; STUDENT_STEPS] = [4.0, 1.0, 0.3, 0.1];
pub const DEFAULT_STUDENT_HIDDEN: usize = 16;

fn normal(rng: &mut dyn RngCore) -> f64 {
    rng.sample(StandardNormal)
}

/// A sampler `G_θ(z)` trained through vector-Jacobian products of its
/// training outputs.
pub trait Generator {
    /// Whatever the backward pass needs to revisit a training batch.
    type Tape;

    fn dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Flat `n × d` inference samples.
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Training outputs `x̂` (flat) for a fresh batch of latents.
    fn forward_train(&self, batch: usize, rng: &mut dyn RngCore) -> (Vec<f64>, Self::Tape);

    /// Training outputs of the same batch recomputed under other parameters.
    fn replay(&self, params: &[f64], tape: &Self::Tape) -> Vec<f64>;

    /// Adds `cot · ∂x̂_i/∂θ` for sample `i` into `grad`.
    fn sample_vjp(&self, tape: &Self::Tape, i: usize, cot: &[f64], grad: &mut [f64]);
}

/// One-step `x = μ + e^ℓ ⊙ z`; parameters are `μ` then `ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineGenerator {
    dim: usize,
    params: Vec<f64>,
}

impl AffineGenerator {
    pub fn new(mean: &[f64], std: &[f64]) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() || std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid(
                "affine generator needs matching means and positive deviations",
            ));
        }
        let mut params = mean.to_vec();
        params.extend(std.iter().map(|s| s.ln()));
        Ok(AffineGenerator {
            dim: mean.len(),
            params,
        })
    }
}

impl Generator for AffineGenerator {
    type Tape = Vec<f64>;

    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        self.forward_train(n, rng).0
    }

    fn forward_train(&self, batch: usize, rng: &mut dyn RngCore) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = (0..batch * self.dim).map(|_| normal(rng)).collect();
        (self.replay(&self.params, &z), z)
    }

    fn replay(&self, params: &[f64], z: &Vec<f64>) -> Vec<f64> {
        let d = self.dim;
        z.iter()
            .enumerate()
            .map(|(j, z)| params[j % d] + params[d + j % d].exp() * z)
            .collect()
    }

    fn sample_vjp(&self, z: &Vec<f64>, i: usize, cot: &[f64], grad: &mut [f64]) {
        let d = self.dim;
        for k in 0..d {
            grad[k] += cot[k];
            grad[d + k] += cot[k] * self.params[d + k].exp() * z[i * d + k];
        }
    }
}

/// Four-step student. Step `k` denoises with
/// `D_k(x) = a_k ⊙ x + b_k + MLP_k(c_k·x)` and, before the next step,
/// re-noises to that step's level. Sampling starts from `σ₁·z`.
///
/// Training gradients flow only through the exit step's denoiser and its
/// input is treated as a constant. The exit is the last step unless
/// `stochastic_exit` draws it uniformly per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewStepGenerator {
    dim: usize,
    sigmas: [f64; STUDENT_STEPS],
    in_scale: [f64; STUDENT_STEPS],
    shape: MlpShape,
    params: Vec<f64>,
    pub stochastic_exit: bool,
}

/// Inputs of the exit steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTape {
    pub inputs: Vec<f64>,
    pub exits: Vec<usize>,
}

impl FewStepGenerator {
    /// Initialized so that every step outputs exactly `N(0, I)`: the
    /// networks start at zero and `a_k` rescales the step input to unit
    /// variance.
    pub fn new(dim: usize, hidden: usize, sigmas: [f64; STUDENT_STEPS], seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        if dim == 0 || hidden == 0 || sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(
                "student needs positive dimension, width and noise levels",
            ));
        }
        let shape = MlpShape::new(vec![dim, hidden, dim]);
        let mut in_scale = [0.0; STUDENT_STEPS];
        in_scale[0] = 1.0 / sigmas[0];
        for k in 1..STUDENT_STEPS {
            in_scale[k] = 1.0 / (1.0 + sigmas[k] * sigmas[k]).sqrt();
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for scale in in_scale {
            params.extend(std::iter::repeat_n(scale, dim));
            params.extend(std::iter::repeat_n(0.0, dim));
            params.extend(shape.init(&mut rng));
        }
        Ok(FewStepGenerator {
            dim,
            sigmas,
            in_scale,
            shape,
            params,
            stochastic_exit: false,
        })
    }

    pub fn with_defaults(dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, DEFAULT_STUDENT_HIDDEN, DEFAULT_STUDENT_SIGMAS, seed)
    }

    pub fn steps(&self) -> usize {
        STUDENT_STEPS
    }

    pub fn sigmas(&self) -> &[f64; STUDENT_STEPS] {
        &self.sigmas
    }

    fn step_len(&self) -> usize {
        2 * self.dim + self.shape.param_count()
    }

    /// Offsets of `a_k`, `b_k` and the network of step `k`.
    pub fn step_offsets(&self, k: usize) -> (usize, usize, usize) {
        let base = k * self.step_len();
        (base, base + self.dim, base + 2 * self.dim)
    }

    fn denoise(&self, params: &[f64], k: usize, x: &[f64], out: &mut [f64]) {
        let (a, b, net) = self.step_offsets(k);
        let scaled: Vec<f64> = x.iter().map(|v| v * self.in_scale[k]).collect();
        let acts = self
            .shape
            .forward(&params[net..net + self.shape.param_count()], &scaled);
        let y = acts.last().unwrap();
        for i in 0..self.dim {
            out[i] = params[a + i] * x[i] + params[b + i] + y[i];
        }
    }

    /// Input of step `exit` for one latent, drawing the re-noising on the way.
    fn run_to(&self, exit: usize, rng: &mut dyn RngCore, x: &mut [f64]) {
        let mut xh = vec![0.0; self.dim];
        for v in x.iter_mut() {
            *v = self.sigmas[0] * normal(rng);
        }
        for k in 0..exit {
            self.denoise(&self.params, k, x, &mut xh);
            for i in 0..self.dim {
                x[i] = xh[i] + self.sigmas[k + 1] * normal(rng);
            }
        }
    }
}

impl Generator for FewStepGenerator {
    type Tape = StudentTape;

    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; n * d];
        let mut x = vec![0.0; d];
        for o in out.chunks_exact_mut(d) {
            self.run_to(STUDENT_STEPS - 1, rng, &mut x);
            self.denoise(&self.params, STUDENT_STEPS - 1, &x, o);
        }
        out
    }

    fn forward_train(&self, batch: usize, rng: &mut dyn RngCore) -> (Vec<f64>, StudentTape) {
        let d = self.dim;
        let mut tape = StudentTape {
            inputs: vec![0.0; batch * d],
            exits: Vec::with_capacity(batch),
        };
        for x in tape.inputs.chunks_exact_mut(d) {
            let exit = if self.stochastic_exit {
                rng.gen_range(0..STUDENT_STEPS)
            } else {
                STUDENT_STEPS - 1
            };
            self.run_to(exit, rng, x);
            tape.exits.push(exit);
        }
        (self.replay(&self.params, &tape), tape)
    }

    fn replay(&self, params: &[f64], tape: &StudentTape) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; tape.inputs.len()];
        for ((x, o), &k) in tape
            .inputs
            .chunks_exact(d)
            .zip(out.chunks_exact_mut(d))
            .zip(&tape.exits)
        {
            self.denoise(params, k, x, o);
        }
        out
    }

    fn sample_vjp(&self, tape: &StudentTape, i: usize, cot: &[f64], grad: &mut [f64]) {
        let d = self.dim;
        let k = tape.exits[i];
        let x = &tape.inputs[i * d..(i + 1) * d];
        let (a, b, net) = self.step_offsets(k);
        for j in 0..d {
            grad[a + j] += cot[j] * x[j];
            grad[b + j] += cot[j];
        }
        let n = self.shape.param_count();
        let scaled: Vec<f64> = x.iter().map(|v| v * self.in_scale[k]).collect();
        let acts = self.shape.forward(&self.params[net..net + n], &scaled);
        self.shape.backward(
            &self.params[net..net + n],
            &acts,
            cot,
            &mut grad[net..net + n],
        );
    }
}
