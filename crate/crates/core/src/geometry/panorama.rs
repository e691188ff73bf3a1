//! Equirectangular panoramas: spherical mapping, perspective splitting and
//! depth lifting.
//!
//! Longitude grows with yaw toward camera `+x` (0 at `+z`), latitude is
//! positive upward (toward `-y`). Pixel `x` spans longitude `[-π, π)` left to
//! right and pixel `y` spans latitude `[π/2, -π/2]` top to bottom.

use std::f64::consts::PI;

use nalgebra::{Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraPose, CameraView, ColorImage, DepthMap, Intrinsics};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

pub const DEFAULT_PANO_FOV_V_DEG: f64 = 90.0;
pub const DEFAULT_PANO_FOV_H_DEG: f64 = 120.0;

/// Yaw/pitch pair in degrees; positive pitch looks up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewAngle {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

/// 9 yaws every 40° times pitches {-30°, 0°, +30°}: 27 views.
pub fn default_split_angles() -> Vec<ViewAngle> {
    let mut out = Vec::with_capacity(27);
    for pitch in [-30.0, 0.0, 30.0] {
        for i in 0..9 {
            out.push(ViewAngle {
                yaw_deg: 40.0 * i as f64,
                pitch_deg: pitch,
            });
        }
    }
    out
}

/// Unit viewing direction for a yaw/pitch in degrees.
pub fn direction_from_angles(yaw_deg: f64, pitch_deg: f64) -> Vector3<f64> {
    let (y, p) = (yaw_deg.to_radians(), pitch_deg.to_radians());
    Vector3::new(p.cos() * y.sin(), -p.sin(), p.cos() * y.cos())
}

/// Pure rotation about the panorama center looking along `(yaw, pitch)`.
pub fn pose_from_angles(yaw_deg: f64, pitch_deg: f64, center: Point3<f64>) -> CameraPose {
    let r = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch_deg.to_radians());
    CameraPose {
        rotation: r.into_inner(),
        translation: center.coords,
    }
}

/// Continuous panorama coordinate of a direction.
pub fn direction_to_pano(dir: &Vector3<f64>, width: u32, height: u32) -> (f64, f64) {
    let d = dir.normalize();
    let lon = d.x.atan2(d.z);
    let lat = (-d.y).clamp(-1.0, 1.0).asin();
    (
        (lon / (2.0 * PI) + 0.5) * width as f64,
        (0.5 - lat / PI) * height as f64,
    )
}

/// Unit direction through a continuous panorama coordinate.
pub fn pano_to_direction(x: f64, y: f64, width: u32, height: u32) -> Vector3<f64> {
    let lon = (x / width as f64 - 0.5) * 2.0 * PI;
    let lat = (0.5 - y / height as f64) * PI;
    Vector3::new(lat.cos() * lon.sin(), -lat.sin(), lat.cos() * lon.cos())
}

fn check_aspect(width: u32, height: u32) -> Result<()> {
    if height == 0 || width != 2 * height {
        return Err(Error::invalid(format!(
            "equirectangular panorama must be 2:1, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Perspective views of an equirectangular panorama, one per angle, by
/// bilinear sampling. Views are pure rotations about the world origin.
pub fn pano_to_perspective(
    pano: &ColorImage,
    fov_v_deg: f64,
    fov_h_deg: f64,
    angles: &[ViewAngle],
    out_width: u32,
    out_height: u32,
) -> Result<Vec<(ColorImage, CameraView)>> {
    check_aspect(pano.width, pano.height)?;
    if !(fov_v_deg > 0.0 && fov_v_deg < 180.0) || !(fov_h_deg > 0.0 && fov_h_deg < 360.0) {
        return Err(Error::invalid(format!(
            "field of view {fov_h_deg}x{fov_v_deg} out of range"
        )));
    }
    // a pinhole cannot cover 180° or more horizontally
    let intrinsics = Intrinsics::from_fov(fov_h_deg, fov_v_deg, out_width, out_height)?;
    let views = angles
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let pose = pose_from_angles(a.yaw_deg, a.pitch_deg, Point3::origin());
            let view = CameraView::new(intrinsics, pose, i as u64);
            let mut img = ColorImage::new(out_width, out_height);
            for v in 0..out_height {
                for u in 0..out_width {
                    let dir = pose.rotation * intrinsics.pixel_ray(u, v);
                    let (x, y) = direction_to_pano(&dir, pano.width, pano.height);
                    img.set(u, v, pano.sample_bilinear(x, y, true));
                }
            }
            (img, view)
        })
        .collect();
    Ok(views)
}

/// Lifts a panorama of ray distances into a cloud around `center`.
pub fn pano_depth_to_cloud(
    distance: &DepthMap,
    colors: Option<&ColorImage>,
    center: Point3<f64>,
) -> Result<PointCloud> {
    let (w, h) = (distance.width(), distance.height());
    check_aspect(w, h)?;
    if let Some(c) = colors {
        if c.width != w || c.height != h {
            return Err(Error::invalid("panorama color and depth sizes differ"));
        }
    }
    let mut pts = Vec::new();
    let mut cols = Vec::new();
    for v in 0..h {
        for u in 0..w {
            if let Some(d) = distance.get(u, v) {
                let dir = pano_to_direction(u as f64 + 0.5, v as f64 + 0.5, w, h);
                pts.push(center + dir * d);
                if let Some(c) = colors {
                    cols.push(c.get(u, v));
                }
            }
        }
    }
    PointCloud::with_colors(pts, colors.map(|_| cols), crate::pointcloud::WORLD_FRAME)
}
