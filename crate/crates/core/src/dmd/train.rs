use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::generator::Generator;
use super::schedule::DiffusionSchedule;
use super::score::{ScoreField, TrainableScore};
use crate::error::{Error, Result};

pub const DEFAULT_FAKE_PER_GEN: usize = 5;
/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Momentum-free Adam keeps the generator/fake game from oscillating.
pub const ADAM_BETAS: (f64, f64) = (0.0, 0.99);

/// Returns `false` for generator samples to drop from a training batch.
pub type RejectionHook<'a> = &'a dyn Fn(&[f64]) -> bool;

/// Monte-Carlo DMD gradient with everything needed to audit it.
#[derive(Debug, Clone)]
pub struct DmdGradient<T> {
    pub grad: Vec<f64>,
    /// Per-parameter standard error of `grad`.
    pub std_err: Vec<f64>,
    /// Mean squared norm of the weighted score difference over the batch.
    pub score_gap: f64,
    /// Kept samples' weighted `s_real − s_fake` at their noised points.
    pub cotangents: Vec<f64>,
    pub kept: Vec<usize>,
    pub tape: T,
}

impl<T> DmdGradient<T> {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Norm of the standard-error vector, the noise floor of `norm`.
    pub fn noise_floor(&self) -> f64 {
        self.std_err.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// `∇θ L = −E_{z,t,ε}[(s_real − s_fake)(x̂ + σ(t)ε) · ∂x̂/∂θ]` over one batch.
pub fn dmd_generator_grad<G: Generator>(
    gen: &G,
    real: &dyn ScoreField,
    fake: &dyn ScoreField,
    schedule: &DiffusionSchedule,
    batch: usize,
    rng: &mut dyn RngCore,
) -> DmdGradient<G::Tape> {
    dmd_generator_grad_filtered(gen, real, fake, schedule, batch, rng, None)
}

pub fn dmd_generator_grad_filtered<G: Generator>(
    gen: &G,
    real: &dyn ScoreField,
    fake: &dyn ScoreField,
    schedule: &DiffusionSchedule,
    batch: usize,
    rng: &mut dyn RngCore,
    hook: Option<RejectionHook>,
) -> DmdGradient<G::Tape> {
    let d = gen.dim();
    let p = gen.params().len();
    let (out, tape) = gen.forward_train(batch, rng);
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    let mut contrib = vec![0.0; p];
    let mut cotangents = Vec::new();
    let mut kept = Vec::new();
    let mut gap = 0.0;
    let (mut sr, mut sf) = (vec![0.0; d], vec![0.0; d]);
    let mut xt = vec![0.0; d];
    for (i, x) in out.chunks_exact(d).enumerate() {
        if hook.is_some_and(|h| !h(x)) {
            continue;
        }
        let sigma = schedule.sigma(schedule.sample_t(rng));
        for j in 0..d {
            let e: f64 = StandardNormal.sample(rng);
            xt[j] = x[j] + sigma * e;
        }
        real.score(&xt, sigma, &mut sr);
        fake.score(&xt, sigma, &mut sf);
        let w = schedule.weighting.weight(sigma);
        let g: Vec<f64> = sr.iter().zip(&sf).map(|(a, b)| w * (a - b)).collect();
        gap += g.iter().map(|v| v * v).sum::<f64>();
        contrib.iter_mut().for_each(|c| *c = 0.0);
        gen.sample_vjp(&tape, i, &g, &mut contrib);
        for k in 0..p {
            sum[k] -= contrib[k];
            sum_sq[k] += contrib[k] * contrib[k];
        }
        cotangents.extend_from_slice(&g);
        kept.push(i);
    }
    let n = kept.len() as f64;
    let grad: Vec<f64> = sum
        .iter()
        .map(|s| if n > 0.0 { s / n } else { 0.0 })
        .collect();
    let std_err = if n > 1.0 {
        (0..p)
            .map(|k| ((sum_sq[k] - n * grad[k] * grad[k]).max(0.0) / (n - 1.0) / n).sqrt())
            .collect()
    } else {
        vec![0.0; p]
    };
    DmdGradient {
        grad,
        std_err,
        score_gap: if n > 0.0 { gap / n } else { 0.0 },
        cotangents,
        kept,
        tape,
    }
}

/// `−mean_i cot_i · x̂_i(params)` over the kept samples of a recorded batch.
/// Its gradient at the recorded parameters is the DMD gradient.
pub fn surrogate_loss<G: Generator>(gen: &G, params: &[f64], est: &DmdGradient<G::Tape>) -> f64 {
    let d = gen.dim();
    let out = gen.replay(params, &est.tape);
    let total: f64 = est
        .kept
        .iter()
        .zip(est.cotangents.chunks_exact(d))
        .map(|(&i, g)| {
            -g.iter()
                .zip(&out[i * d..(i + 1) * d])
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    total / est.kept.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: ADAM_BETAS.0,
            beta2: ADAM_BETAS.1,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmdConfig {
    pub iters: usize,
    pub batch: usize,
    pub fake_per_gen: usize,
    pub lr_gen: f64,
    pub lr_fake: f64,
    pub seed: u64,
    /// Cosine-anneal both learning rates down to `lr_floor` times their
    /// initial value over the run.
    pub anneal: bool,
    pub lr_floor: f64,
}

impl Default for DmdConfig {
    fn default() -> Self {
        DmdConfig {
            iters: 2000,
            batch: 256,
            fake_per_gen: DEFAULT_FAKE_PER_GEN,
            lr_gen: 5e-3,
            lr_fake: 5e-2,
            seed: 0,
            anneal: true,
            lr_floor: 0.05,
        }
    }
}

impl DmdConfig {
    /// Learning-rate multiplier at outer step `step`.
    pub fn lr_factor(&self, step: usize) -> f64 {
        if !self.anneal || self.iters < 2 {
            return 1.0;
        }
        let u = step as f64 / (self.iters - 1) as f64;
        self.lr_floor + (1.0 - self.lr_floor) * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch must be positive"));
        }
        if !(self.lr_gen > 0.0
            && self.lr_fake > 0.0
            && self.lr_gen.is_finite()
            && self.lr_fake.is_finite())
        {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= 1.0) {
            return Err(Error::invalid("lr_floor must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmdLogRow {
    pub step: usize,
    pub gen_loss_proxy: f64,
    pub fake_loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DmdLog {
    pub rows: Vec<DmdLogRow>,
    pub fake_updates: usize,
    pub gen_updates: usize,
}

impl DmdLog {
    pub fn write_csv_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,gen_loss_proxy,fake_loss,grad_norm")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.step, r.gen_loss_proxy, r.fake_loss, r.grad_norm
            )?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(f))
    }
}

fn check(step: usize, what: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v > DIVERGENCE_LIMIT {
        return Err(Error::Diverged {
            step,
            detail: format!("{what} = {v}"),
        });
    }
    Ok(())
}

/// Alternates `fake_per_gen` denoising updates of the fake score on
/// generator samples with one DMD update of the generator, for `iters`
/// outer steps. On divergence the generator is left at its last state.
pub fn dmd_train<G: Generator, F: TrainableScore>(
    gen: &mut G,
    fake: &mut F,
    real: &dyn ScoreField,
    schedule: &DiffusionSchedule,
    cfg: &DmdConfig,
) -> Result<DmdLog> {
    dmd_train_with(gen, fake, real, schedule, cfg, None)
}

pub fn dmd_train_with<G: Generator, F: TrainableScore>(
    gen: &mut G,
    fake: &mut F,
    real: &dyn ScoreField,
    schedule: &DiffusionSchedule,
    cfg: &DmdConfig,
    hook: Option<RejectionHook>,
) -> Result<DmdLog> {
    cfg.validate()?;
    schedule.validate()?;
    if real.trainable() {
        return Err(Error::invalid("the real score must be frozen"));
    }
    if !fake.trainable() {
        return Err(Error::invalid("the fake score must be trainable"));
    }
    if real.dim() != gen.dim() || fake.dim() != gen.dim() {
        return Err(Error::invalid("generator and score dimensions differ"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_gen = Adam::new(cfg.lr_gen, gen.params().len());
    let mut opt_fake = Adam::new(cfg.lr_fake, fake.params().len());
    let mut log = DmdLog::default();
    let d = gen.dim();
    for step in 0..cfg.iters {
        let decay = cfg.lr_factor(step);
        opt_gen.lr = cfg.lr_gen * decay;
        opt_fake.lr = cfg.lr_fake * decay;
        let mut fake_loss = 0.0;
        for _ in 0..cfg.fake_per_gen {
            let out = gen.sample(cfg.batch, &mut rng);
            let samples: Vec<f64> = match hook {
                Some(h) => out
                    .chunks_exact(d)
                    .filter(|x| h(x))
                    .flatten()
                    .cloned()
                    .collect(),
                None => out,
            };
            let (loss, grad) = fake.dsm_loss_grad(&samples, schedule, &mut rng);
            check(step, "fake loss", loss)?;
            opt_fake.step(fake.params_mut(), &grad);
            log.fake_updates += 1;
            fake_loss += loss;
        }
        let est = dmd_generator_grad_filtered(gen, real, fake, schedule, cfg.batch, &mut rng, hook);
        check(step, "score gap", est.score_gap)?;
        opt_gen.step(gen.params_mut(), &est.grad);
        log.gen_updates += 1;
        log::trace!(
            "dmd step {step}: gap {:.4e} fake {:.4e} grad {:.4e} fake params {:?}",
            est.score_gap,
            fake_loss / cfg.fake_per_gen.max(1) as f64,
            est.norm(),
            &fake.params()[..fake.params().len().min(4)]
        );
        log.rows.push(DmdLogRow {
            step,
            gen_loss_proxy: est.score_gap,
            fake_loss: fake_loss / cfg.fake_per_gen.max(1) as f64,
            grad_norm: est.norm(),
        });
        if gen.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                step,
                detail: "non-finite generator parameters".into(),
            });
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmd::generator::FewStepGenerator;
    use crate::dmd::score::{AnalyticScore, GaussianMixture, GaussianScore, MlpScore};
    use rand::Rng;

    fn gaussian(mean: f64, var: f64) -> AnalyticScore {
        AnalyticScore::new(GaussianMixture::gaussian(vec![mean], vec![var]).unwrap())
    }

    /// Parameter index of the final step's bias on axis 0.
    fn final_bias(g: &FewStepGenerator) -> usize {
        g.step_offsets(g.steps() - 1).1
    }

    #[test]
    fn identical_scores_give_exact_zero_and_fixed_point() {
        let real = AnalyticScore::new(
            GaussianMixture::new(
                vec![1.0, 1.0],
                vec![vec![-1.0, 0.0], vec![1.0, 1.0]],
                vec![vec![0.3, 0.3]; 2],
            )
            .unwrap(),
        );
        let mut gen = FewStepGenerator::with_defaults(2, 1).unwrap();
        gen.stochastic_exit = true;
        let start = gen.params().to_vec();
        let mut opt = Adam::new(1e-2, start.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sched = DiffusionSchedule::default();
        for _ in 0..20 {
            let est = dmd_generator_grad(&gen, &real, &real, &sched, 64, &mut rng);
            assert!(est.grad.iter().all(|g| *g == 0.0));
            opt.step(gen.params_mut(), &est.grad);
        }
        assert_eq!(gen.params(), start.as_slice());

        // a freshly built network fake is the real score bit for bit
        let fake = MlpScore::new(real.clone(), &[8], &mut rng);
        let est = dmd_generator_grad(&gen, &real, &fake, &sched, 64, &mut rng);
        assert!(est.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gaussian_gradient_matches_closed_form() {
        // real N(2, 1), student N(0, 1) at init, fake equal to the student:
        // s_real − s_fake = 2/(1 + σ²) everywhere, so the gradient on the
        // output bias is −2·E_t[1/(1 + σ(t)²)]
        let real = gaussian(2.0, 1.0);
        let fake = GaussianScore::new(&[0.0], &[1.0]).unwrap();
        let gen = FewStepGenerator::with_defaults(1, 0).unwrap();
        let sched = DiffusionSchedule::default();
        let expected = -2.0 * sched.mean_inverse_variance(1.0);
        let est = dmd_generator_grad(
            &gen,
            &real,
            &fake,
            &sched,
            4096,
            &mut ChaCha8Rng::seed_from_u64(7),
        );
        let b = final_bias(&gen);
        assert!(est.grad[b] < 0.0, "descent must raise the mean toward +2");
        assert!(
            (est.grad[b] - expected).abs() <= 3.0 * est.std_err[b],
            "{} vs {expected} (se {})",
            est.grad[b],
            est.std_err[b]
        );
        // only the final step receives gradient
        let (a0, _, _) = gen.step_offsets(gen.steps() - 1);
        assert!(est.grad[..a0].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn batch_means_converge_like_inverse_sqrt_n() {
        let real = gaussian(2.0, 1.0);
        let fake = GaussianScore::new(&[0.0], &[1.0]).unwrap();
        let gen = FewStepGenerator::with_defaults(1, 0).unwrap();
        let sched = DiffusionSchedule::default();
        let expected = -2.0 * sched.mean_inverse_variance(1.0);
        let b = final_bias(&gen);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let runs: Vec<(f64, f64)> = (0..100)
            .map(|_| {
                let e = dmd_generator_grad(&gen, &real, &fake, &sched, 64, &mut rng);
                (e.grad[b], e.std_err[b])
            })
            .collect();
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.0).sum::<f64>() / n;
        let sd = (runs.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let reported = runs.iter().map(|r| r.1).sum::<f64>() / n;
        // the spread across batches agrees with the per-batch standard error
        assert!((sd / reported - 1.0).abs() < 0.3, "{sd} vs {reported}");
        assert!((mean - expected).abs() <= 3.0 * sd / n.sqrt());
    }

    #[test]
    fn surrogate_directional_derivative_matches() {
        let mix = GaussianMixture::new(
            vec![0.4, 0.6],
            vec![vec![-1.5, 0.3], vec![1.0, -0.5]],
            vec![vec![0.2, 0.4], vec![0.3, 0.1]],
        )
        .unwrap();
        let real = AnalyticScore::new(mix);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut fake = MlpScore::new(real.clone(), &[8, 8], &mut rng);
        for p in fake.params_mut() {
            *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let mut gen = FewStepGenerator::with_defaults(2, 3).unwrap();
        gen.stochastic_exit = true;
        for p in gen.params_mut() {
            *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let sched = DiffusionSchedule::default();
        let est = dmd_generator_grad(&gen, &real, &fake, &sched, 128, &mut rng);
        for trial in 0..3 {
            let v: Vec<f64> = (0..gen.params().len())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let h = 1e-5;
            let shifted = |s: f64| -> Vec<f64> {
                gen.params()
                    .iter()
                    .zip(&v)
                    .map(|(p, d)| p + s * d)
                    .collect()
            };
            let fd = (surrogate_loss(&gen, &shifted(h), &est)
                - surrogate_loss(&gen, &shifted(-h), &est))
                / (2.0 * h);
            let an: f64 = est.grad.iter().zip(&v).map(|(g, d)| g * d).sum();
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1e-12),
                "trial {trial}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn matched_start_stays_stationary() {
        // The noise floor is the gradient left after the same training run
        // with the generator frozen: the fake's finite-sample fitting error.
        let real = gaussian(0.0, 1.0);
        let frozen = real.clone();
        let sched = DiffusionSchedule::default();
        let run = |seed: u64, lr_gen: f64| {
            let mut fake = GaussianScore::new(&[0.0], &[1.0]).unwrap();
            let mut gen = FewStepGenerator::with_defaults(1, seed).unwrap();
            let cfg = DmdConfig {
                iters: 100,
                seed,
                lr_gen,
                ..DmdConfig::default()
            };
            let log = dmd_train(&mut gen, &mut fake, &real, &sched, &cfg).unwrap();
            let est = dmd_generator_grad(
                &gen,
                &real,
                &fake,
                &sched,
                4096,
                &mut ChaCha8Rng::seed_from_u64(seed + 50),
            );
            (gen, log, est.norm())
        };
        for seed in 0..4 {
            let (_, _, floor) = run(seed, f64::MIN_POSITIVE);
            let (gen, log, norm) = run(seed, DmdConfig::default().lr_gen);
            assert_eq!(real, frozen);
            assert_eq!(log.fake_updates, 5 * log.gen_updates);
            assert_eq!(log.gen_updates, 100);
            assert!(norm < 10.0 * floor, "seed {seed}: {norm} vs floor {floor}");
            let (m, s) = crate::dmd::metrics::moments(
                &gen.sample(100_000, &mut ChaCha8Rng::seed_from_u64(6)),
                1,
            );
            assert!(
                m[0].abs() < 0.05 && (s[0] - 1.0).abs() < 0.05,
                "{m:?} {s:?}"
            );
            if seed == 0 {
                let mut csv = Vec::new();
                log.write_csv_to(&mut csv).unwrap();
                let text = String::from_utf8(csv).unwrap();
                assert!(text.starts_with("step,gen_loss_proxy,fake_loss,grad_norm\n0,"));
                assert_eq!(text.lines().count(), 101);
            }
        }
    }

    #[test]
    fn divergence_and_preconditions() {
        let real = gaussian(3.0, 0.25);
        let sched = DiffusionSchedule::default();
        let mut gen = FewStepGenerator::with_defaults(1, 0).unwrap();
        let mut fake = GaussianScore::new(&[3.0], &[0.5]).unwrap();
        let cfg = DmdConfig {
            iters: 200,
            lr_gen: 1e4,
            lr_fake: 1e-9,
            anneal: false,
            ..DmdConfig::default()
        };
        assert!(matches!(
            dmd_train(&mut gen, &mut fake, &real, &sched, &cfg),
            Err(Error::Diverged { .. })
        ));
        let bad = DmdConfig {
            batch: 0,
            ..DmdConfig::default()
        };
        assert!(dmd_train(&mut gen, &mut fake, &real, &sched, &bad).is_err());
        let mut wrong_dim = GaussianScore::new(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(dmd_train(
            &mut gen,
            &mut wrong_dim,
            &real,
            &sched,
            &DmdConfig::default()
        )
        .is_err());
    }

    #[test]
    fn rejection_hook_drops_samples() {
        let real = gaussian(2.0, 1.0);
        let fake = GaussianScore::new(&[0.0], &[1.0]).unwrap();
        let gen = FewStepGenerator::with_defaults(1, 0).unwrap();
        let sched = DiffusionSchedule::default();
        let keep_positive = |x: &[f64]| x[0] > 0.0;
        let est = dmd_generator_grad_filtered(
            &gen,
            &real,
            &fake,
            &sched,
            200,
            &mut ChaCha8Rng::seed_from_u64(1),
            Some(&keep_positive),
        );
        assert!(est.kept.len() > 50 && est.kept.len() < 150);
        let none = |_: &[f64]| false;
        let est = dmd_generator_grad_filtered(
            &gen,
            &real,
            &fake,
            &sched,
            50,
            &mut ChaCha8Rng::seed_from_u64(1),
            Some(&none),
        );
        assert!(est.kept.is_empty() && est.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn annealing_schedule() {
        let cfg = DmdConfig {
            iters: 11,
            ..DmdConfig::default()
        };
        assert!((cfg.lr_factor(0) - 1.0).abs() < 1e-15);
        assert!((cfg.lr_factor(10) - cfg.lr_floor).abs() < 1e-15);
        assert!((cfg.lr_factor(5) - (cfg.lr_floor + 1.0) / 2.0).abs() < 1e-12);
    }
}
