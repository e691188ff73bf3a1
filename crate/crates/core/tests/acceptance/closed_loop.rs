use std::time::Instant;

use stereomem::pipeline::{run_pipeline, NoiseModel, PipelineConfig, ReconstructorConfig};
use stereomem::trajectory::DEFAULT_FRAMES;

use crate::{check, Outcome};

const SCENES: [&str; 3] = ["spheres", "boxes", "mixed"];
const BUDGET_S: f64 = 60.0;

pub fn closed_loop() -> Outcome {
    let mut lines = Vec::new();
    for scene in SCENES {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = PipelineConfig::synthetic(scene, dir.path().join("oracle"));
        check(cfg.trajectory.frames == DEFAULT_FRAMES, || {
            "not the default frame count".into()
        })?;
        let t = Instant::now();
        let r = run_pipeline(&cfg).map_err(|e| format!("{scene}: {e}"))?;
        let secs = t.elapsed().as_secs_f64();
        let e = r.eval.as_ref().ok_or("no evaluation")?;
        let m = e.get("primary").ok_or("no primary threshold")?;
        check(m.threshold == 2.0 * cfg.memory.voxel, || {
            format!("{scene}: primary threshold {}", m.threshold)
        })?;
        check(m.f1 == 1.0, || {
            format!(
                "{scene}: oracle F1 {} (P {}, R {})",
                m.f1, m.precision, m.recall
            )
        })?;
        let cam = r.max_cam_error();
        check(r.trajectories.len() == 4 && cam < 1e-6, || {
            format!("{scene}: camera error {cam:.3e}")
        })?;
        check(secs < BUDGET_S, || {
            format!("{scene}: oracle run took {secs:.1}s")
        })?;

        let mut noisy = PipelineConfig::synthetic(scene, dir.path().join("noisy"));
        let noise = NoiseModel::default();
        check(noise.depth_rel == 0.01, || {
            format!("default depth noise {}", noise.depth_rel)
        })?;
        noisy.reconstructor = ReconstructorConfig::Noisy { noise };
        let t = Instant::now();
        let rn = run_pipeline(&noisy).map_err(|e| format!("{scene} noisy: {e}"))?;
        let nsecs = t.elapsed().as_secs_f64();
        let en = rn.eval.as_ref().ok_or("no evaluation")?;
        let sigma = en.noise_rms.ok_or("noise rms not reported")?;
        let mn = en.get("noise").ok_or("no noise threshold")?;
        check((mn.threshold - 3.0 * sigma).abs() < 1e-12, || {
            format!(
                "{scene}: noise threshold {} vs 3σ {}",
                mn.threshold,
                3.0 * sigma
            )
        })?;
        check(mn.f1 >= 0.95, || {
            format!("{scene}: noisy F1 {:.4} at 3σ = {:.4}", mn.f1, mn.threshold)
        })?;
        check(nsecs < BUDGET_S, || {
            format!("{scene}: noisy run took {nsecs:.1}s")
        })?;
        lines.push(format!(
            "{scene}: F1 1.0, cam {cam:.1e}, {secs:.1}s; noisy F1 {:.4} @ 3σ={:.3}, {nsecs:.1}s",
            mn.f1, mn.threshold
        ));
    }
    Ok(lines.join("; "))
}
