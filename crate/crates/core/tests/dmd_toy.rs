use stereomem::dmd::{run_toy, FakeKind, GaussianMixture, ToyConfig, Weighting};

#[test]
fn mixture_distillation_cuts_wasserstein_fivefold() {
    let mut cfg = ToyConfig::default();
    cfg.target = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![vec![-2.0, 0.0], vec![2.0, 1.0]],
        vec![vec![0.25, 0.25], vec![0.25, 0.25]],
    )
    .unwrap();
    cfg.fake = FakeKind::Mlp;
    cfg.train.lr_fake = 5e-3;
    cfg.schedule = cfg.schedule.with_weighting(Weighting::NoiseVariance);
    cfg.eval_samples = 10_000;
    let (_, report, log) = run_toy(&cfg).unwrap();
    assert_eq!(log.fake_updates, 5 * log.gen_updates);
    assert!(
        report.w2_initial >= 5.0 * report.w2_trained,
        "W2 {} -> {}",
        report.w2_initial,
        report.w2_trained
    );
}
