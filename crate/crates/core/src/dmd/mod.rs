//! Distribution matching distillation at toy scale: a four-step student
//! distilled against a frozen analytic score through a trainable fake score.

pub mod generator;
pub mod metrics;
pub mod mlp;
pub mod schedule;
pub mod score;
pub mod toy;
pub mod train;

pub use generator::{AffineGenerator, FewStepGenerator, Generator, StudentTape, STUDENT_STEPS};
pub use metrics::{moments, sliced_wasserstein2, wasserstein2_1d};
pub use mlp::MlpShape;
pub use schedule::{DiffusionSchedule, Weighting};
pub use score::{
    AnalyticScore, GaussianMixture, GaussianScore, MlpScore, ScoreField, TrainableScore,
};
pub use toy::{run_toy, FakeKind, ToyConfig, ToyReport};
pub use train::{
    dmd_generator_grad, dmd_generator_grad_filtered, dmd_train, dmd_train_with, surrogate_loss,
    Adam, DmdConfig, DmdGradient, DmdLog, DmdLogRow, RejectionHook,
};
