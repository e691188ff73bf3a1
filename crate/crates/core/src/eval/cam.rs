use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle_between, CameraPose};
use crate::pointcloud::{umeyama, SimilarityTransform};

/// Camera errors after similarity alignment of the predicted trajectory.
/// Rotation error in degrees; translation errors in ground-truth units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamMetrics {
    pub rot_err_deg: f64,
    pub trans_err: f64,
    pub ate: f64,
}

impl CamMetrics {
    pub fn max_error(&self) -> f64 {
        self.rot_err_deg.max(self.trans_err).max(self.ate)
    }
}

/// Nearest rotation to `m` in the Frobenius sense.
fn project_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

/// Similarity taking predicted camera centers onto ground truth. When the
/// centers are degenerate (coincident or collinear) the rotation comes
/// from the orientations and the scale from the spread ratio.
pub fn align_trajectories(pred: &[CameraPose], gt: &[CameraPose]) -> Result<SimilarityTransform> {
    let pc: Vec<Point3<f64>> = pred.iter().map(|p| p.center()).collect();
    let gc: Vec<Point3<f64>> = gt.iter().map(|p| p.center()).collect();
    match umeyama(&pc, &gc, true) {
        Ok(t) => Ok(t),
        Err(Error::Degenerate(_)) => {
            let m: Matrix3<f64> = pred
                .iter()
                .zip(gt)
                .map(|(p, g)| g.rotation * p.rotation.transpose())
                .sum();
            let r = project_rotation(&m);
            let n = pc.len() as f64;
            let pm = pc.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
            let gm = gc.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
            let sp: f64 = pc.iter().map(|p| (p.coords - pm).norm_squared()).sum();
            let sg: f64 = gc.iter().map(|p| (p.coords - gm).norm_squared()).sum();
            let s = if sp > 0.0 && sg > 0.0 {
                (sg / sp).sqrt()
            } else {
                1.0
            };
            SimilarityTransform::new(s, r, gm - s * r * pm)
        }
        Err(e) => Err(e),
    }
}

pub fn cam_metrics(pred: &[CameraPose], gt: &[CameraPose]) -> Result<CamMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectory lengths differ: {} predicted vs {} ground truth",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::invalid("camera metrics need at least 2 poses"));
    }
    let t = align_trajectories(pred, gt)?;
    let n = pred.len() as f64;
    let (mut rot, mut dist, mut sq) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let aligned = t.apply_pose(p);
        rot += rotation_angle_between(&aligned.rotation, &g.rotation).to_degrees();
        let d = (aligned.translation - g.translation).norm();
        dist += d;
        sq += d * d;
    }
    Ok(CamMetrics {
        rot_err_deg: rot / n,
        trans_err: dist / n,
        ate: (sq / n).sqrt(),
    })
}
