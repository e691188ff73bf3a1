use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stereomem::dmd::train::{dmd_generator_grad, DEFAULT_FAKE_PER_GEN};
use stereomem::dmd::{
    run_toy, AnalyticScore, DiffusionSchedule, FewStepGenerator, GaussianMixture, ToyConfig,
    STUDENT_STEPS,
};

use crate::{check, Outcome};

pub fn dmd_toy() -> Outcome {
    check(STUDENT_STEPS == 4 && DEFAULT_FAKE_PER_GEN == 5, || {
        format!("{STUDENT_STEPS} student steps, {DEFAULT_FAKE_PER_GEN} fake updates per generator update")
    })?;
    let mut cfg = ToyConfig::default();
    cfg.target = GaussianMixture::gaussian(vec![3.0], vec![0.25]).unwrap();
    cfg.eval_samples = 100_000;
    check(cfg.train.iters <= 2000, || {
        format!("{} outer steps", cfg.train.iters)
    })?;
    let (gen, report, log) = run_toy(&cfg).map_err(|e| e.to_string())?;
    check(
        log.fake_updates == 5 * log.gen_updates && log.gen_updates <= 2000,
        || {
            format!(
                "{} fake / {} generator updates",
                log.fake_updates, log.gen_updates
            )
        },
    )?;
    let (mean, std) = (report.mean[0], report.std[0]);
    check((mean - 3.0).abs() <= 0.1, || {
        format!("sample mean {mean:.4}")
    })?;
    check((std - 0.5).abs() <= 0.1, || format!("sample std {std:.4}"))?;

    // identical real and fake scores leave nothing to descend
    let real = AnalyticScore::new(cfg.target.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sched = DiffusionSchedule::default();
    let mut max_grad = 0.0f64;
    for g in [
        &gen,
        &FewStepGenerator::with_defaults(1, 0).map_err(|e| e.to_string())?,
    ] {
        let est = dmd_generator_grad(g, &real, &real, &sched, 512, &mut rng);
        max_grad = est.grad.iter().fold(max_grad, |m, x| m.max(x.abs()));
    }
    check(max_grad == 0.0, || {
        format!("gradient with s_fake = s_real: {max_grad:e}")
    })?;
    Ok(format!(
        "mean {mean:.4}, std {std:.4} over 1e5 samples after {} generator / {} fake updates; zero gradient when scores match",
        log.gen_updates, log.fake_updates
    ))
}
