use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::{
    FewStepGenerator, Generator, DEFAULT_STUDENT_HIDDEN, DEFAULT_STUDENT_SIGMAS,
};
use super::metrics::{moments, sliced_wasserstein2};
use super::schedule::DiffusionSchedule;
use super::score::{AnalyticScore, GaussianMixture, GaussianScore, MlpScore};
use super::train::{dmd_train, DmdConfig, DmdLog};
use crate::error::Result;

const SLICES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FakeKind {
    Gaussian,
    Mlp,
}

/// A complete toy run as read from TOML: the training keys at top level plus
/// the target density and model choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    #[serde(flatten)]
    pub train: DmdConfig,
    pub target: GaussianMixture,
    pub guidance: f64,
    pub fake: FakeKind,
    pub fake_hidden: Vec<usize>,
    pub student_hidden: usize,
    /// Exit each training sample at a random student step instead of
    /// always the last one.
    pub stochastic_exit: bool,
    pub schedule: DiffusionSchedule,
    pub eval_samples: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            train: DmdConfig::default(),
            target: GaussianMixture::gaussian(vec![3.0], vec![0.25]).expect("valid"),
            guidance: 1.0,
            fake: FakeKind::Gaussian,
            fake_hidden: vec![32, 32],
            student_hidden: DEFAULT_STUDENT_HIDDEN,
            stochastic_exit: false,
            schedule: DiffusionSchedule::default(),
            eval_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub w2_initial: f64,
    pub w2_trained: f64,
    pub fake_updates: usize,
    pub gen_updates: usize,
}

/// Trains a fresh student on `cfg` and measures it on `eval_samples` draws.
pub fn run_toy(cfg: &ToyConfig) -> Result<(FewStepGenerator, ToyReport, DmdLog)> {
    cfg.target.validate()?;
    let d = cfg.target.dim();
    let real = AnalyticScore::new(cfg.target.clone()).with_guidance(cfg.guidance);
    let mut gen = FewStepGenerator::new(
        d,
        cfg.student_hidden,
        DEFAULT_STUDENT_SIGMAS,
        cfg.train.seed,
    )?;
    gen.stochastic_exit = cfg.stochastic_exit;
    let initial = gen.clone();
    let log = match cfg.fake {
        FakeKind::Gaussian => {
            let mut fake = GaussianScore::matching(&cfg.target);
            dmd_train(&mut gen, &mut fake, &real, &cfg.schedule, &cfg.train)?
        }
        FakeKind::Mlp => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0xfa4e);
            let mut fake = MlpScore::new(real.clone(), &cfg.fake_hidden, &mut rng);
            dmd_train(&mut gen, &mut fake, &real, &cfg.schedule, &cfg.train)?
        }
    };
    let n = cfg.eval_samples.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0xe7a1);
    let target = cfg.target.sample(n, &mut rng);
    let before = initial.sample(n, &mut rng);
    let after = gen.sample(n, &mut rng);
    let (mean, std) = moments(&after, d);
    let report = ToyReport {
        dim: d,
        mean,
        std,
        target_mean: cfg.target.mean(),
        target_std: cfg.target.variance().iter().map(|v| v.sqrt()).collect(),
        w2_initial: sliced_wasserstein2(&before, &target, d, SLICES)?,
        w2_trained: sliced_wasserstein2(&after, &target, d, SLICES)?,
        fake_updates: log.fake_updates,
        gen_updates: log.gen_updates,
    };
    Ok((gen, report, log))
}
