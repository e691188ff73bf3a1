//! Independent reference implementations. Plain loops, no spatial indices.

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use stereomem::geometry::{CameraPose, CameraView, Intrinsics};

pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v))
        .to_rotation_matrix()
        .into_inner()
}

pub fn random_vector<R: Rng>(rng: &mut R, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.gen_range(-scale..scale))
}

pub fn random_view<R: Rng>(rng: &mut R, w: u32, h: u32, frame_id: u64) -> CameraView {
    let f = rng.gen_range(0.6..1.6) * w as f64;
    let k = Intrinsics::new(
        f,
        f * rng.gen_range(0.9..1.1),
        w as f64 / 2.0 + rng.gen_range(-2.0..2.0),
        h as f64 / 2.0 + rng.gen_range(-2.0..2.0),
        w,
        h,
    )
    .unwrap();
    let pose = CameraPose::new(random_rotation(rng), random_vector(rng, 3.0)).unwrap();
    CameraView::new(k, pose, frame_id)
}

/// Camera at a random spot in a box, looking at a random point near the origin.
pub fn looking_view<R: Rng>(rng: &mut R, w: u32, h: u32, frame_id: u64) -> CameraView {
    let k =
        Intrinsics::from_fov(rng.gen_range(50.0..100.0), rng.gen_range(40.0..80.0), w, h).unwrap();
    let eye = Point3::from(random_vector(rng, 2.0));
    let target = Point3::from(random_vector(rng, 0.5)) + Vector3::new(0.0, 0.0, 2.0);
    let pose = CameraPose::look_at(eye, target, -Vector3::y()).unwrap();
    CameraView::new(k, pose, frame_id)
}

/// Smallest squared distance from `q` to any of `pts`, by exhaustive scan.
pub fn brute_nearest_sq(q: &Point3<f64>, pts: &[Point3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for p in pts {
        let dx = q.x - p.x;
        let dy = q.y - p.y;
        let dz = q.z - p.z;
        best = best.min(dx * dx + dy * dy + dz * dz);
    }
    best
}

/// Precision and recall at `t` by O(N²) scans.
pub fn brute_pr(pred: &[Point3<f64>], gt: &[Point3<f64>], t: f64) -> (f64, f64) {
    let within = |a: &[Point3<f64>], b: &[Point3<f64>]| {
        a.iter().filter(|q| brute_nearest_sq(q, b) <= t * t).count() as f64 / a.len() as f64
    };
    (within(pred, gt), within(gt, pred))
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Area under the (recall, precision) polyline that starts at
/// `(0, precision of the first threshold)`.
pub fn trapezoid_auc(pr: &[(f64, f64)]) -> f64 {
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, pr[0].0);
    for &(p, r) in pr {
        area += (r - r0) * (p + p0) * 0.5;
        r0 = r;
        p0 = p;
    }
    area
}

/// Dense single-head attention over every token of every (pair, frame)
/// sequence at once, with a block mask that forbids attention across
/// sequences. `tokens[s]` holds the `L×C` tokens of sequence `s`.
pub fn masked_dense_attention(
    tokens: &[Vec<Vec<f64>>],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
    wv: &[Vec<f64>],
) -> Vec<Vec<Vec<f64>>> {
    let c = wq.len();
    let project = |x: &[f64], w: &[Vec<f64>]| -> Vec<f64> {
        (0..c)
            .map(|j| (0..c).map(|i| x[i] * w[i][j]).sum())
            .collect()
    };
    let mut flat = Vec::new();
    let mut owner = Vec::new();
    for (s, seq) in tokens.iter().enumerate() {
        for t in seq {
            flat.push(t.clone());
            owner.push(s);
        }
    }
    let q: Vec<Vec<f64>> = flat.iter().map(|x| project(x, wq)).collect();
    let k: Vec<Vec<f64>> = flat.iter().map(|x| project(x, wk)).collect();
    let v: Vec<Vec<f64>> = flat.iter().map(|x| project(x, wv)).collect();
    let scale = (c as f64).sqrt();
    let mut out: Vec<Vec<Vec<f64>>> = tokens.iter().map(|s| Vec::with_capacity(s.len())).collect();
    for a in 0..flat.len() {
        let logits: Vec<f64> = (0..flat.len())
            .map(|b| {
                if owner[a] == owner[b] {
                    (0..c).map(|i| q[a][i] * k[b][i]).sum::<f64>() / scale
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let row: Vec<f64> = (0..c)
            .map(|j| (0..flat.len()).map(|b| e[b] * v[b][j]).sum::<f64>() / z)
            .collect();
        out[owner[a]].push(row);
    }
    out
}
