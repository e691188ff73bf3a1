//! Pinhole camera model.
//!
//! Conventions used throughout the crate:
//! - right-handed world and camera frames; the camera looks down `+z`,
//!   `x` points right and `y` points down in the image;
//! - poses are camera-to-world: `p_world = R * p_cam + t`, so `t` is the
//!   camera center in world coordinates;
//! - integer pixel `(u, v)` has its center at continuous image coordinate
//!   `(u + 0.5, v + 0.5)`; `cx`, `cy` are continuous coordinates.

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics for a centered principal point and the given field of view
    /// (degrees, full angles).
    pub fn from_fov(fov_h_deg: f64, fov_v_deg: f64, width: u32, height: u32) -> Result<Self> {
        if !(fov_h_deg > 0.0 && fov_h_deg < 180.0 && fov_v_deg > 0.0 && fov_v_deg < 180.0) {
            return Err(Error::invalid(format!(
                "field of view must lie in (0, 180) degrees, got {fov_h_deg} x {fov_v_deg}"
            )));
        }
        let fx = 0.5 * width as f64 / (0.5 * fov_h_deg.to_radians()).tan();
        let fy = 0.5 * height as f64 / (0.5 * fov_v_deg.to_radians()).tan();
        Self::new(
            fx,
            fy,
            0.5 * width as f64,
            0.5 * height as f64,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be non-zero"));
        }
        if !(self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64)
        {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside image {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K^-1 * (x, y, 1)` for a continuous image coordinate.
    #[inline]
    pub fn unproject(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// Ray (z = 1) through the center of integer pixel `(u, v)`.
    #[inline]
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        self.unproject(u as f64 + 0.5, v as f64 + 0.5)
    }

    /// Continuous image coordinate of a camera-frame point. `None` behind the camera.
    #[inline]
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<Point2<f64>> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some(Point2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Integer pixel containing a continuous coordinate, if inside the image.
    #[inline]
    pub fn pixel_of(&self, p: &Point2<f64>) -> Option<(u32, u32)> {
        if p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64 {
            Some((p.x as u32, p.y as u32))
        } else {
            None
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let width = (self.width as f64 * factor).round().max(1.0) as u32;
        let height = (self.height as f64 * factor).round().max(1.0) as u32;
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.fx * sx,
            self.fy * sy,
            self.cx * sx,
            self.cy * sy,
            width,
            height,
        )
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose translation must be finite"));
        }
        Ok(CameraPose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image (image `y` points the other way).
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        let z = forward
            .try_normalize(1e-12)
            .ok_or_else(|| Error::degenerate("look-at target coincides with eye"))?;
        let x = z.cross(&up).try_normalize(1e-12).ok_or_else(|| {
            Error::degenerate("look-at up vector is parallel to viewing direction")
        })?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Self::new(rotation, eye.coords)
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    /// Viewing direction (camera `+z`) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    #[inline]
    pub fn to_world(&self, p_cam: &Vector3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p_cam + self.translation)
    }

    #[inline]
    pub fn to_camera(&self, p_world: &Point3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_world.coords - self.translation)
    }

    /// Rigid motion applied on the world side: `T * pose`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        CameraPose {
            rotation: rotation * self.rotation,
            translation: rotation * self.translation + translation,
        }
    }

    /// Pose after rotating the camera rigidly about `pivot` by `angle` around `axis`.
    pub fn rotated_about(
        &self,
        pivot: &Point3<f64>,
        axis: &Unit<Vector3<f64>>,
        angle: f64,
    ) -> Self {
        let rot = Rotation3::from_axis_angle(axis, angle).into_inner();
        let rel = self.translation - pivot.coords;
        CameraPose {
            rotation: rot * self.rotation,
            translation: pivot.coords + rot * rel,
        }
    }
}

pub(crate) fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation must be finite"));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = r.determinant();
    if ortho > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
        return Err(Error::invalid(format!(
            "rotation is not orthonormal with det +1 (|RᵀR - I| = {ortho:.3e}, det = {det})"
        )));
    }
    Ok(())
}

/// Geodesic angle between two rotations, in radians.
///
/// Uses `atan2(2 sin θ, 2 cos θ)` from the skew and trace parts of `AᵀB`;
/// `acos` of the trace alone loses about 1e-8 rad near zero.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let m = a.transpose() * b;
    let s = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
    .norm();
    s.atan2(m.trace() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub intrinsics: Intrinsics,
    pub pose: CameraPose,
    pub frame_id: u64,
}

impl CameraView {
    pub fn new(intrinsics: Intrinsics, pose: CameraPose, frame_id: u64) -> Self {
        CameraView {
            intrinsics,
            pose,
            frame_id,
        }
    }

    /// Continuous pixel coordinate and camera depth of a world point.
    #[inline]
    pub fn project(&self, p_world: &Point3<f64>) -> Option<(Point2<f64>, f64)> {
        let pc = self.pose.to_camera(p_world);
        self.intrinsics.project(&pc).map(|px| (px, pc.z))
    }

    pub fn with_pose(&self, pose: CameraPose) -> Self {
        CameraView { pose, ..*self }
    }
}
