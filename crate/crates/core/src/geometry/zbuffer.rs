use nalgebra::Point3;

use super::CameraView;

/// Index of the nearest point landing in each pixel (one-pixel splats),
/// row-major. Depth ties keep the lower index.
pub fn render_point_indices(points: &[Point3<f64>], view: &CameraView) -> Vec<Option<usize>> {
    let k = &view.intrinsics;
    let mut hit: Vec<Option<usize>> = vec![None; k.pixel_count()];
    let mut depth = vec![f64::INFINITY; k.pixel_count()];
    for (i, p) in points.iter().enumerate() {
        let Some((px, z)) = view.project(p) else {
            continue;
        };
        let Some((u, v)) = k.pixel_of(&px) else {
            continue;
        };
        let j = v as usize * k.width as usize + u as usize;
        if z < depth[j] {
            depth[j] = z;
            hit[j] = Some(i);
        }
    }
    hit
}
