use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraView, ColorImage, DepthMap};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

fn check_dims(depth: &DepthMap, view: &CameraView) -> Result<()> {
    let k = &view.intrinsics;
    if depth.width() != k.width || depth.height() != k.height {
        return Err(Error::invalid(format!(
            "depth map is {}x{} but camera expects {}x{}",
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    Ok(())
}

/// World point of every pixel (`None` where depth is invalid), row-major.
///
/// Each valid pixel lifts to `R · (D(x) · K⁻¹ · x̂) + t` with `x̂` at the
/// pixel center.
pub fn backproject_grid(depth: &DepthMap, view: &CameraView) -> Result<Vec<Option<Point3<f64>>>> {
    check_dims(depth, view)?;
    let k = &view.intrinsics;
    let mut out = Vec::with_capacity(k.pixel_count());
    for v in 0..k.height {
        for u in 0..k.width {
            out.push(
                depth
                    .get(u, v)
                    .map(|d| view.pose.to_world(&(k.pixel_ray(u, v) * d))),
            );
        }
    }
    Ok(out)
}

/// Point cloud of all valid pixels in row-major order.
pub fn backproject(depth: &DepthMap, view: &CameraView) -> Result<PointCloud> {
    let pts = backproject_grid(depth, view)?
        .into_iter()
        .flatten()
        .collect();
    PointCloud::new(pts, crate::pointcloud::WORLD_FRAME)
}

/// As [`backproject`], carrying each pixel's color.
pub fn backproject_colored(
    depth: &DepthMap,
    image: &ColorImage,
    view: &CameraView,
) -> Result<PointCloud> {
    if image.width != depth.width() || image.height != depth.height() {
        return Err(Error::invalid("color image and depth map sizes differ"));
    }
    let grid = backproject_grid(depth, view)?;
    let mut pts = Vec::new();
    let mut cols = Vec::new();
    for (p, c) in grid.into_iter().zip(&image.data) {
        if let Some(p) = p {
            pts.push(p);
            cols.push(*c);
        }
    }
    PointCloud::with_colors(pts, Some(cols), crate::pointcloud::WORLD_FRAME)
}

/// Continuous pixel coordinates and camera depths of world points.
pub fn reproject(points: &[Point3<f64>], view: &CameraView) -> Vec<Option<(Point2<f64>, f64)>> {
    points.iter().map(|p| view.project(p)).collect()
}

/// Line through the camera center: unit direction and moment `c × d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluckerRay {
    pub direction: Vector3<f64>,
    pub moment: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluckerGrid {
    pub width: u32,
    pub height: u32,
    pub rays: Vec<PluckerRay>,
}

impl PluckerGrid {
    pub fn get(&self, u: u32, v: u32) -> &PluckerRay {
        &self.rays[v as usize * self.width as usize + u as usize]
    }
}

pub fn plucker_rays(view: &CameraView) -> PluckerGrid {
    let k = &view.intrinsics;
    let center = view.pose.translation;
    let mut rays = Vec::with_capacity(k.pixel_count());
    for v in 0..k.height {
        for u in 0..k.width {
            let direction = (view.pose.rotation * k.pixel_ray(u, v)).normalize();
            rays.push(PluckerRay {
                direction,
                moment: center.cross(&direction),
            });
        }
    }
    PluckerGrid {
        width: k.width,
        height: k.height,
        rays,
    }
}
