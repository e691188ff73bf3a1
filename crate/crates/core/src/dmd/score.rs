//! Score fields `∇ₓ log p_σ(x)` of densities convolved with `N(0, σ²I)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::MlpShape;
use super::schedule::DiffusionSchedule;
use crate::error::{Error, Result};

pub trait ScoreField {
    fn dim(&self) -> usize;

    /// Score at noise level `sigma`, written into `out`.
    fn score(&self, x: &[f64], sigma: f64, out: &mut [f64]);

    fn trainable(&self) -> bool;

    /// Score at diffusion time `t`.
    fn evaluate(&self, x: &[f64], t: f64, schedule: &DiffusionSchedule) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score(x, schedule.sigma(t), &mut out);
        out
    }
}

/// A score field whose parameters are fitted by denoising score matching.
pub trait TrainableScore: ScoreField {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Denoising loss `mean ‖ε̂(x + σε, σ) − ε‖²` over the flat sample batch
    /// and its parameter gradient, with `ε̂ = −σ·s`.
    fn dsm_loss_grad(
        &self,
        samples: &[f64],
        schedule: &DiffusionSchedule,
        rng: &mut dyn rand::RngCore,
    ) -> (f64, Vec<f64>);
}

/// Mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Result<Self> {
        let m = GaussianMixture {
            weights,
            means,
            vars,
        };
        m.validate()?;
        let total: f64 = m.weights.iter().sum();
        Ok(GaussianMixture {
            weights: m.weights.iter().map(|w| w / total).collect(),
            ..m
        })
    }

    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![var])
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.vars.len() != k {
            return Err(Error::invalid(
                "mixture needs matching non-empty weights, means and variances",
            ));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(Error::invalid("mixture dimension must be positive"));
        }
        for (m, v) in self.means.iter().zip(&self.vars) {
            if m.len() != d || v.len() != d {
                return Err(Error::invalid("mixture components differ in dimension"));
            }
            if m.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::invalid(
                    "mixture means must be finite and variances positive",
                ));
            }
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, x) in out.iter_mut().zip(m) {
                *o += w * x;
            }
        }
        out
    }

    /// Per-axis variance of the mixture.
    pub fn variance(&self) -> Vec<f64> {
        let mu = self.mean();
        let mut out = vec![0.0; self.dim()];
        for ((w, m), v) in self.weights.iter().zip(&self.means).zip(&self.vars) {
            for i in 0..out.len() {
                out[i] += w * (v[i] + (m[i] - mu[i]).powi(2));
            }
        }
        out
    }

    /// Flat `n × d` samples.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            let mut u: f64 = rng.gen();
            let mut k = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                if u < *w {
                    k = i;
                    break;
                }
                u -= w;
            }
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                out.push(self.means[k][i] + self.vars[k][i].sqrt() * z);
            }
        }
        out
    }

    pub fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        let s2 = sigma * sigma;
        let d = self.dim();
        let mut logs = Vec::with_capacity(self.weights.len());
        for ((w, m), v) in self.weights.iter().zip(&self.means).zip(&self.vars) {
            let mut l = w.ln();
            for i in 0..d {
                let var = v[i] + s2;
                l -= 0.5 * ((x[i] - m[i]).powi(2) / var + var.ln());
            }
            logs.push(l);
        }
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, l) in logs.iter().enumerate() {
            let r = (l - top).exp() / norm;
            for i in 0..d {
                out[i] -= r * (x[i] - self.means[k][i]) / (self.vars[k][i] + s2);
            }
        }
    }
}

/// Frozen analytic score. `guidance` scales the score (sharpening the
/// density to `p^γ`); 1 leaves it untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScore {
    pub mixture: GaussianMixture,
    pub guidance: f64,
}

impl AnalyticScore {
    pub fn new(mixture: GaussianMixture) -> Self {
        AnalyticScore {
            mixture,
            guidance: 1.0,
        }
    }

    pub fn with_guidance(mut self, guidance: f64) -> Self {
        self.guidance = guidance;
        self
    }
}

impl ScoreField for AnalyticScore {
    fn dim(&self) -> usize {
        self.mixture.dim()
    }

    fn score(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        self.mixture.score_into(x, sigma, out);
        if self.guidance != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.guidance);
        }
    }

    fn trainable(&self) -> bool {
        false
    }
}

fn normal(rng: &mut dyn rand::RngCore) -> f64 {
    rng.sample(StandardNormal)
}

/// Closed-form axis-aligned Gaussian family; parameters are the means
/// followed by the log standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianScore {
    dim: usize,
    params: Vec<f64>,
}

impl GaussianScore {
    pub fn new(mean: &[f64], std: &[f64]) -> Result<Self> {
        if mean.is_empty()
            || mean.len() != std.len()
            || std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::invalid(
                "Gaussian score needs matching means and positive deviations",
            ));
        }
        let mut params = mean.to_vec();
        params.extend(std.iter().map(|s| s.ln()));
        Ok(GaussianScore {
            dim: mean.len(),
            params,
        })
    }

    /// Moment-matched to a mixture.
    pub fn matching(mixture: &GaussianMixture) -> Self {
        let std: Vec<f64> = mixture.variance().iter().map(|v| v.sqrt()).collect();
        Self::new(&mixture.mean(), &std).expect("validated mixture")
    }

    pub fn mean(&self) -> &[f64] {
        &self.params[..self.dim]
    }

    pub fn std(&self) -> Vec<f64> {
        self.params[self.dim..].iter().map(|l| l.exp()).collect()
    }
}

impl ScoreField for GaussianScore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        for i in 0..self.dim {
            let var = (2.0 * self.params[self.dim + i]).exp() + sigma * sigma;
            out[i] = -(x[i] - self.params[i]) / var;
        }
    }

    fn trainable(&self) -> bool {
        true
    }
}

impl TrainableScore for GaussianScore {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn dsm_loss_grad(
        &self,
        samples: &[f64],
        schedule: &DiffusionSchedule,
        rng: &mut dyn rand::RngCore,
    ) -> (f64, Vec<f64>) {
        let d = self.dim;
        let n = samples.len() / d;
        let mut grad = vec![0.0; 2 * d];
        let mut loss = 0.0;
        for x in samples.chunks_exact(d) {
            let sigma = schedule.sigma(schedule.sample_t(rng));
            for i in 0..d {
                let eps = normal(rng);
                let xt = x[i] + sigma * eps;
                let e2l = (2.0 * self.params[d + i]).exp();
                let var = e2l + sigma * sigma;
                let r = sigma * (xt - self.params[i]) / var - eps;
                loss += r * r;
                grad[i] += 2.0 * r * (-sigma / var);
                grad[d + i] += 2.0 * r * (-sigma * (xt - self.params[i]) * 2.0 * e2l / (var * var));
            }
        }
        let inv = 1.0 / n.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }
}

/// Dense-network fake score: the real score plus a learned noise-prediction
/// residual whose last layer starts at zero, so it initially equals `base`.
/// Its denoising loss is `mean ‖(ε̂ − ε)/c(σ)‖²` with the residual scale
/// `c` below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpScore {
    base: AnalyticScore,
    shape: MlpShape,
    params: Vec<f64>,
    center: Vec<f64>,
    data_var: Vec<f64>,
}

impl MlpScore {
    pub fn new<R: Rng + ?Sized>(base: AnalyticScore, hidden: &[usize], rng: &mut R) -> Self {
        let d = base.dim();
        let mut sizes = vec![d + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        let shape = MlpShape::new(sizes);
        let params = shape.init(rng);
        MlpScore {
            center: base.mixture.mean(),
            data_var: base.mixture.variance(),
            base,
            shape,
            params,
        }
    }

    /// The residual enters the noise prediction scaled by
    /// `σ_d / √(σ_d² + σ²)` and the loss is divided by the same factor, so
    /// its regression target keeps unit scale at every noise level.
    fn out_scale(&self, axis: usize, sigma: f64) -> f64 {
        let v = self.data_var[axis];
        (v / (v + sigma * sigma)).sqrt()
    }

    fn features(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let mut f: Vec<f64> = (0..x.len())
            .map(|i| (x[i] - self.center[i]) / (self.data_var[i] + sigma * sigma).sqrt())
            .collect();
        f.push(sigma.ln() / 4.0);
        f
    }
}

impl ScoreField for MlpScore {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn score(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        self.base.score(x, sigma, out);
        let acts = self.shape.forward(&self.params, &self.features(x, sigma));
        for (i, (o, r)) in out.iter_mut().zip(acts.last().unwrap()).enumerate() {
            *o -= self.out_scale(i, sigma) * r / sigma;
        }
    }

    fn trainable(&self) -> bool {
        true
    }
}

impl TrainableScore for MlpScore {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn dsm_loss_grad(
        &self,
        samples: &[f64],
        schedule: &DiffusionSchedule,
        rng: &mut dyn rand::RngCore,
    ) -> (f64, Vec<f64>) {
        let d = self.dim();
        let n = samples.len() / d;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut base = vec![0.0; d];
        let mut xt = vec![0.0; d];
        let mut eps = vec![0.0; d];
        for x in samples.chunks_exact(d) {
            let sigma = schedule.sigma(schedule.sample_t(rng));
            for i in 0..d {
                eps[i] = normal(rng);
                xt[i] = x[i] + sigma * eps[i];
            }
            self.base.score(&xt, sigma, &mut base);
            let acts = self.shape.forward(&self.params, &self.features(&xt, sigma));
            let out = acts.last().unwrap();
            let dout: Vec<f64> = (0..d)
                .map(|i| {
                    let c = self.out_scale(i, sigma);
                    let r = (-sigma * base[i] - eps[i]) / c + out[i];
                    loss += r * r;
                    2.0 * r
                })
                .collect();
            self.shape.backward(&self.params, &acts, &dout, &mut grad);
        }
        let inv = 1.0 / n.max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_modes() -> GaussianMixture {
        GaussianMixture::new(
            vec![1.0, 3.0],
            vec![vec![-2.0, 0.5], vec![1.5, -1.0]],
            vec![vec![0.3, 0.2], vec![0.5, 0.4]],
        )
        .unwrap()
    }

    fn log_density(m: &GaussianMixture, x: &[f64], sigma: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..m.weights.len() {
            let mut p = m.weights[k];
            for i in 0..x.len() {
                let v = m.vars[k][i] + sigma * sigma;
                p *= (-(x[i] - m.means[k][i]).powi(2) / (2.0 * v)).exp()
                    / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            total += p;
        }
        total.ln()
    }

    #[test]
    fn mixture_score_is_log_density_gradient() {
        let m = two_modes();
        assert!((m.weights[1] - 0.75).abs() < 1e-15);
        let x = [0.3, -0.2];
        let mut s = [0.0; 2];
        for sigma in [0.02, 0.7, 4.0] {
            m.score_into(&x, sigma, &mut s);
            for i in 0..2 {
                let mut a = x;
                let mut b = x;
                a[i] += 1e-6;
                b[i] -= 1e-6;
                let fd = (log_density(&m, &a, sigma) - log_density(&m, &b, sigma)) / 2e-6;
                assert!((fd - s[i]).abs() < 1e-6, "{fd} vs {}", s[i]);
            }
        }
        // far from both modes the log-sum-exp stays finite
        m.score_into(&[1e4, -1e4], 0.02, &mut s);
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn guidance_scales_and_analytic_is_frozen() {
        let a = AnalyticScore::new(GaussianMixture::gaussian(vec![2.0], vec![1.0]).unwrap());
        assert!(!a.trainable());
        let g = a.clone().with_guidance(3.0);
        let sched = DiffusionSchedule::default();
        let (x, y) = (
            a.evaluate(&[0.5], 0.4, &sched),
            g.evaluate(&[0.5], 0.4, &sched),
        );
        assert!((y[0] - 3.0 * x[0]).abs() < 1e-15);
    }

    #[test]
    fn gaussian_family_matches_single_component_and_fits_by_dsm() {
        let mix = GaussianMixture::gaussian(vec![1.0, -2.0], vec![0.25, 4.0]).unwrap();
        let g = GaussianScore::matching(&mix);
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        g.score(&[0.3, 0.1], 0.6, &mut a);
        mix.score_into(&[0.3, 0.1], 0.6, &mut b);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);

        // gradient check of the DSM loss with a shared noise stream
        let sched = DiffusionSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = mix.sample(64, &mut rng);
        let fake = GaussianScore::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let (_, grad) = fake.dsm_loss_grad(&data, &sched, &mut ChaCha8Rng::seed_from_u64(9));
        for i in 0..4 {
            let mut p = fake.clone();
            let mut q = fake.clone();
            p.params_mut()[i] += 1e-6;
            q.params_mut()[i] -= 1e-6;
            let lp = p
                .dsm_loss_grad(&data, &sched, &mut ChaCha8Rng::seed_from_u64(9))
                .0;
            let lq = q
                .dsm_loss_grad(&data, &sched, &mut ChaCha8Rng::seed_from_u64(9))
                .0;
            assert!(((lp - lq) / 2e-6 - grad[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mlp_score_starts_at_base_and_gradient_checks() {
        let base = AnalyticScore::new(two_modes());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut fake = MlpScore::new(base.clone(), &[8, 8], &mut rng);
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        fake.score(&[0.1, 0.2], 0.3, &mut a);
        base.score(&[0.1, 0.2], 0.3, &mut b);
        assert_eq!(a, b);

        for v in fake.params_mut().iter_mut() {
            *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
        let sched = DiffusionSchedule::default();
        let data = two_modes().sample(16, &mut rng);
        let (_, grad) = fake.dsm_loss_grad(&data, &sched, &mut ChaCha8Rng::seed_from_u64(2));
        for i in (0..fake.params().len()).step_by(7) {
            let mut p = fake.clone();
            let mut q = fake.clone();
            p.params_mut()[i] += 1e-6;
            q.params_mut()[i] -= 1e-6;
            let lp = p
                .dsm_loss_grad(&data, &sched, &mut ChaCha8Rng::seed_from_u64(2))
                .0;
            let lq = q
                .dsm_loss_grad(&data, &sched, &mut ChaCha8Rng::seed_from_u64(2))
                .0;
            let fd = (lp - lq) / 2e-6;
            assert!(
                (fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "{i}: {fd} vs {}",
                grad[i]
            );
        }
    }
}
