use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereomem::geometry::{
    pose_from_angles, rotation_angle_between, CameraPose, CameraView, Intrinsics,
    DEFAULT_PANO_FOV_H_DEG, DEFAULT_PANO_FOV_V_DEG,
};
use stereomem::memory::{Frame, ImageRef, MemoryBank, SourceTag};
use stereomem::retrieval::frustum::{frustum_overlap, Frustum};
use stereomem::retrieval::{plan_retrieval, RetrievalOptions};
use stereomem::trajectory::*;

use crate::oracles::*;
use crate::{check, Outcome};

fn bank_of(views: &[CameraView]) -> MemoryBank {
    let frames: Vec<Frame> = views
        .iter()
        .map(|v| Frame::new(ImageRef::none(), *v))
        .collect();
    MemoryBank::new(1)
        .unwrap()
        .insert(&frames, SourceTag::Generated)
        .unwrap()
}

/// Checks every planned pair against an exhaustive argmax over the bank,
/// each overlap estimated on its own. Returns the number of pairs checked.
fn agrees_with_brute_force(
    label: &str,
    targets: &[CameraView],
    bank: &[CameraView],
    opts: &RetrievalOptions,
) -> Result<usize, String> {
    let plan = plan_retrieval(targets, &bank_of(bank), opts).map_err(|e| e.to_string())?;
    for pair in &plan.pairs {
        let a = Frustum::new(targets[pair.target_index], opts.near, opts.far).unwrap();
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (j, v) in bank.iter().enumerate() {
            let b = Frustum::new(*v, opts.near, opts.far).unwrap();
            let o = frustum_overlap(&a, &b, opts.samples, opts.seed).unwrap();
            if o > best.1 {
                best = (j, o);
            }
        }
        let want = (best.1 >= opts.floor).then_some(best.0);
        check(pair.entry == want && pair.overlap == best.1, || {
            format!(
                "{label} target {}: plan {:?}/{} vs brute force {want:?}/{}",
                pair.target_index, pair.entry, pair.overlap, best.1
            )
        })?;
    }
    Ok(plan.pairs.len())
}

pub fn retrieval_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0;
    for scene in 0..50u64 {
        let m = rng.gen_range(1..=64);
        let n = rng.gen_range(4..=40);
        let bank_views: Vec<_> = (0..m).map(|i| looking_view(&mut rng, 32, 24, i)).collect();
        let targets: Vec<_> = (0..n)
            .map(|i| looking_view(&mut rng, 32, 24, 1000 + i))
            .collect();
        let opts = RetrievalOptions {
            near: 0.2,
            far: 6.0,
            samples: 1500,
            seed: scene,
            floor: 0.05,
        };
        let plan =
            plan_retrieval(&targets, &bank_of(&bank_views), &opts).map_err(|e| e.to_string())?;
        check(plan.f == n as usize / 4, || {
            format!("scene {scene}: F={} for N={n}", plan.f)
        })?;
        compared +=
            agrees_with_brute_force(&format!("scene {scene}"), &targets, &bank_views, &opts)?;
    }

    // panorama bank: 8 yaws × 3 pitches, orbit targets from its center
    let pano_k =
        Intrinsics::from_fov(DEFAULT_PANO_FOV_H_DEG, DEFAULT_PANO_FOV_V_DEG, 32, 24).unwrap();
    let mut pano_views = Vec::new();
    for yaw in 0..8 {
        for pitch in [-30.0, 0.0, 30.0] {
            let pose = pose_from_angles(45.0 * yaw as f64, pitch, Point3::origin());
            pano_views.push(CameraView::new(pano_k, pose, pano_views.len() as u64));
        }
    }
    let start = CameraView::new(
        Intrinsics::new(20.0, 20.0, 16.0, 12.0, 32, 24).unwrap(),
        CameraPose::identity(),
        500,
    );
    let orbit = synthesize(
        &TrajectorySpec::new(TrajectoryKind::Orbit, DEFAULT_FRAMES),
        &start,
        2.0,
    )
    .map_err(|e| e.to_string())?;
    let opts = RetrievalOptions {
        samples: 1500,
        ..RetrievalOptions::from_median_depth(2.0)
    };
    let pano_compared =
        agrees_with_brute_force("24-view panorama bank", &orbit, &pano_views, &opts)?;
    check(pano_compared == DEFAULT_FRAMES / 4, || {
        format!("{pano_compared} orbit targets planned")
    })?;

    let k = Intrinsics::new(20.0, 20.0, 16.0, 12.0, 32, 24).unwrap();
    let one = bank_of(&[CameraView::new(k, CameraPose::identity(), 0)]);
    let opts = RetrievalOptions {
        samples: 1000,
        ..RetrievalOptions::from_median_depth(1.0)
    };
    for n in 4..=200usize {
        let targets: Vec<_> = (0..n as u64)
            .map(|i| CameraView::new(k, CameraPose::identity(), 10 + i))
            .collect();
        let plan = plan_retrieval(&targets, &one, &opts).map_err(|e| e.to_string())?;
        let idx: Vec<usize> = plan.pairs.iter().map(|p| p.target_index).collect();
        let distinct = idx.windows(2).all(|w| w[0] < w[1]) && idx.last().is_some_and(|&i| i < n);
        check(plan.f == n / 4 && idx.len() == n / 4 && distinct, || {
            format!("N={n}: F={} targets {idx:?}", plan.f)
        })?;
    }
    Ok(format!("{compared} planned targets match brute force on 50 scenes, {pano_compared} orbit targets on a 24-view panorama bank; F = floor(N/4) for N in [4, 200]"))
}

pub fn trajectory_defaults() -> Outcome {
    check(
        DEFAULT_UP_DEG == 45.0 && DEFAULT_LEFT_DEG == 90.0 && DEFAULT_RIGHT_DEG == 90.0,
        || format!("angles {DEFAULT_UP_DEG}/{DEFAULT_LEFT_DEG}/{DEFAULT_RIGHT_DEG}"),
    )?;
    check(DEFAULT_ORBIT_RADIUS_RULE == 0.3, || {
        format!("orbit radius rule {DEFAULT_ORBIT_RADIUS_RULE}")
    })?;
    let order = default_order(DEFAULT_FRAMES).kinds();
    let want = [
        TrajectoryKind::Orbit,
        TrajectoryKind::Up,
        TrajectoryKind::Right,
        TrajectoryKind::Left,
    ];
    check(order == want, || format!("default order {order:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let start = random_view(&mut rng, 64, 48, 0);
        let md = rng.gen_range(0.5..5.0);
        for kind in [
            TrajectoryKind::Up,
            TrajectoryKind::Left,
            TrajectoryKind::Right,
        ] {
            let spec = TrajectorySpec::new(kind, DEFAULT_FRAMES);
            let v = synthesize(&spec, &start, md).map_err(|e| e.to_string())?;
            let total = rotation_angle_between(&start.pose.rotation, &v[v.len() - 1].pose.rotation)
                .to_degrees();
            let want = match kind {
                TrajectoryKind::Up => 45.0,
                _ => 90.0,
            };
            worst = worst.max((total - want).abs());
            // the camera swings on a sphere of radius md about the look-at point
            let pivot = start.pose.center() + start.pose.forward() * md;
            let local = start.pose.to_camera(&v[1].pose.center());
            let side_ok = match kind {
                TrajectoryKind::Up => local.y < 0.0,
                TrajectoryKind::Left => local.x < 0.0,
                _ => local.x > 0.0,
            };
            check(side_ok, || {
                format!("trial {trial}: {kind:?} moves the wrong way")
            })?;
            for p in &v {
                worst = worst.max(((p.pose.center() - pivot).norm() - md).abs());
            }
        }
        // orbit: circle of radius 0.3·md, fitted from three of its poses
        let v = synthesize(
            &TrajectorySpec::new(TrajectoryKind::Orbit, DEFAULT_FRAMES),
            &start,
            md,
        )
        .map_err(|e| e.to_string())?;
        let (a, b, c) = (v[0].pose.center(), v[20].pose.center(), v[47].pose.center());
        let o = circumcenter(&a, &b, &c);
        for p in &v {
            worst = worst.max(((p.pose.center() - o).norm() - 0.3 * md).abs());
        }
    }
    check(worst < 1e-9, || format!("pose geometry off by {worst:.3e}"))?;
    Ok(format!(
        "45°/90°/90°, radius 0.3·md, orbit→up→right→left; geometry error {worst:.2e}"
    ))
}

fn circumcenter(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let (u, v) = (b - a, c - a);
    let w = u.cross(&v);
    a + (v.cross(&w) * u.norm_squared() + w.cross(&u) * v.norm_squared()) / (2.0 * w.norm_squared())
}
