use std::time::Instant;

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereomem::eval::{cam_metrics, pcd_auc, pcd_f1};
use stereomem::geometry::{backproject_grid, CameraPose, DepthMap};
use stereomem::pointcloud::{
    icp_scale_refine, umeyama, IcpOptions, PointCloud, SimilarityTransform,
};

use crate::oracles::*;
use crate::{check, Outcome};

pub fn backprojection_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances: Vec<_> = (0..100)
        .map(|i| {
            let view = random_view(&mut rng, 64, 64, i);
            let depth: Vec<f64> = (0..64 * 64).map(|_| rng.gen_range(0.1..50.0)).collect();
            (view, DepthMap::from_values(64, 64, depth).unwrap())
        })
        .collect();
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (view, depth) in &instances {
        let pts = backproject_grid(depth, view).map_err(|e| e.to_string())?;
        for (i, p) in pts.iter().enumerate() {
            let p = p.ok_or("valid pixel lost")?;
            let (px, _) = view.project(&p).ok_or("point behind camera")?;
            // pixel (u, v) has its center at (u + 0.5, v + 0.5)
            let (u, v) = ((i % 64) as f64 + 0.5, (i / 64) as f64 + 0.5);
            worst = worst.max((px.x - u).abs()).max((px.y - v).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst < 1e-6, || format!("max pixel error {worst:.3e}"))?;
    check(secs < 1.0, || format!("took {secs:.3}s"))?;
    Ok(format!(
        "max pixel error {worst:.2e} over 100 instances in {secs:.3}s"
    ))
}

pub fn umeyama_and_icp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let truth = SimilarityTransform::new(
            rng.gen_range(0.1..10.0),
            random_rotation(&mut rng),
            random_vector(&mut rng, 10.0),
        )
        .unwrap();
        let src: Vec<Point3<f64>> = (0..100)
            .map(|_| Point3::from(random_vector(&mut rng, 3.0)))
            .collect();
        let dst: Vec<Point3<f64>> = src
            .iter()
            .map(|p| truth.scale * (truth.rotation * p.coords) + truth.translation)
            .map(Point3::from)
            .collect();
        let est = umeyama(&src, &dst, true).map_err(|e| e.to_string())?;
        worst = worst.max(est.max_param_diff(&truth));
    }
    check(worst < 1e-9, || {
        format!("umeyama parameter error {worst:.3e}")
    })?;

    // 0.8x scale perturbation about the centroid, 100 clouds of four kinds
    let opts = IcpOptions {
        trim_quantile: None,
        symmetric: true,
        ..IcpOptions::default()
    };
    let (mut worst_scale, mut most_iters) = (0.0f64, 0);
    for i in 0..100 {
        let gt = PointCloud::new(icp_cloud(i % 4, 500, &mut rng), "world").unwrap();
        let c = gt.centroid().unwrap();
        let shrink =
            SimilarityTransform::new(0.8, nalgebra::Matrix3::identity(), c.coords * 0.2).unwrap();
        let pred = gt.transformed(&shrink);
        let r = icp_scale_refine(&pred, &gt, &SimilarityTransform::identity(), &opts)
            .map_err(|e| e.to_string())?;
        let err = (r.transform.scale * 0.8 - 1.0).abs();
        check(r.iterations <= 50 && err < 1e-3, || {
            format!(
                "cloud {i}: icp scale error {err:.3e} after {} iterations",
                r.iterations
            )
        })?;
        worst_scale = worst_scale.max(err);
        most_iters = most_iters.max(r.iterations);
    }
    Ok(format!(
        "umeyama max error {worst:.2e}; icp scale error at most {worst_scale:.2e}, at most {most_iters} iterations"
    ))
}

/// Uniform cube, anisotropic Gaussian blob, ellipsoid surface or height field.
fn icp_cloud(kind: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    let axes = Vector3::new(
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
    );
    let rot = random_rotation(rng);
    (0..n)
        .map(|_| {
            let g = Vector3::<f64>::from_fn(|_, _| rng.sample(rand_distr::StandardNormal));
            let p = match kind {
                0 => random_vector(rng, 1.0),
                1 => g,
                2 => g.normalize(),
                _ => {
                    let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    Vector3::new(x, y, 0.3 * (2.0 * x).sin() * (3.0 * y).cos() + 0.2 * x * x)
                }
            };
            Point3::from(rot * p.component_mul(&axes))
        })
        .collect()
}

pub fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..20 {
        let gt: Vec<Point3<f64>> = (0..500)
            .map(|_| Point3::from(random_vector(&mut rng, 1.0)))
            .collect();
        let pred: Vec<Point3<f64>> = gt
            .iter()
            .map(|p| {
                if rng.gen_bool(0.1) {
                    Point3::from(random_vector(&mut rng, 1.5))
                } else {
                    p + random_vector(&mut rng, 0.05)
                }
            })
            .collect();
        let (gc, pc) = (
            PointCloud::new(gt.clone(), "world").unwrap(),
            PointCloud::new(pred.clone(), "world").unwrap(),
        );
        let mut thresholds: Vec<f64> = (0..5).map(|_| rng.gen_range(0.005..0.3)).collect();
        thresholds.sort_by(f64::total_cmp);
        let mut pr = Vec::new();
        for &t in &thresholds {
            let (p, r) = brute_pr(&pred, &gt, t);
            let m = pcd_f1(&pc, &gc, t).map_err(|e| e.to_string())?;
            check(
                m.precision == p && m.recall == r && m.f1 == f1(p, r),
                || format!("trial {trial} t={t}: {m:?} vs brute force p={p} r={r}"),
            )?;
            pr.push((p, r));
        }
        let auc = pcd_auc(&pc, &gc, &thresholds).map_err(|e| e.to_string())?;
        let want = trapezoid_auc(&pr);
        check(auc == want, || {
            format!("trial {trial}: auc {auc} vs brute force {want}")
        })?;
    }

    let gt: Vec<CameraPose> = (0..30)
        .map(|_| CameraPose::new(random_rotation(&mut rng), random_vector(&mut rng, 4.0)).unwrap())
        .collect();
    let s = SimilarityTransform::new(
        0.37,
        random_rotation(&mut rng),
        random_vector(&mut rng, 20.0),
    )
    .unwrap();
    let moved: Vec<_> = gt.iter().map(|p| s.apply_pose(p)).collect();
    let inv = cam_metrics(&moved, &gt)
        .map_err(|e| e.to_string())?
        .max_error();
    check(inv < 1e-9, || {
        format!("similarity changes camera metrics by {inv:.3e}")
    })?;

    let axis = Unit::new_normalize(Vector3::new(0.3, -1.0, 0.7));
    let d = Rotation3::from_axis_angle(&axis, 5f64.to_radians()).into_inner();
    let rotated: Vec<_> = gt
        .iter()
        .map(|p| CameraPose {
            rotation: p.rotation * d,
            ..*p
        })
        .collect();
    let m = cam_metrics(&rotated, &gt).map_err(|e| e.to_string())?;
    check((m.rot_err_deg - 5.0).abs() < 1e-6, || {
        format!("5° perturbation reported as {}°", m.rot_err_deg)
    })?;
    Ok(format!(
        "20/20 pairs exact; similarity drift {inv:.2e}; 5° reported as {:.9}°",
        m.rot_err_deg
    ))
}
