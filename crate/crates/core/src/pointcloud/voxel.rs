use indexmap::IndexMap;
use nalgebra::{Point3, Vector3};

use super::{PointCloud, SimilarityTransform};
use crate::error::{Error, Result};

/// Integer voxel coordinate of a point.
#[inline]
pub fn voxel_key(p: &Point3<f64>, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

/// 1% of the bounding-box diagonal, the default cache resolution.
pub fn default_voxel_size(cloud: &PointCloud) -> f64 {
    0.01 * cloud.bbox_diagonal()
}

/// One point per occupied voxel: centroid position and mean color. Output
/// order follows the first occurrence of each voxel in the input.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::invalid(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    let colors = cloud.colors();
    let mut cells: IndexMap<(i64, i64, i64), (Vector3<f64>, [f64; 3], usize)> = IndexMap::new();
    for (i, p) in cloud.positions().iter().enumerate() {
        let cell = cells
            .entry(voxel_key(p, voxel))
            .or_insert((Vector3::zeros(), [0.0; 3], 0));
        cell.0 += p.coords;
        if let Some(c) = colors {
            for k in 0..3 {
                cell.1[k] += c[i][k];
            }
        }
        cell.2 += 1;
    }
    let positions = cells
        .values()
        .map(|(s, _, n)| Point3::from(s / *n as f64))
        .collect();
    let out_colors = colors.map(|_| {
        cells
            .values()
            .map(|(_, c, n)| {
                let n = *n as f64;
                [c[0] / n, c[1] / n, c[2] / n]
            })
            .collect()
    });
    PointCloud::with_colors(positions, out_colors, cloud.frame())
}

/// Number of distinct voxels touched by the cloud.
pub fn occupied_voxels(cloud: &PointCloud, voxel: f64) -> usize {
    let mut keys: Vec<_> = cloud
        .positions()
        .iter()
        .map(|p| voxel_key(p, voxel))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// `b` mapped into `a`'s frame, concatenated after `a`, then voxel-downsampled.
pub fn merge(
    a: &PointCloud,
    b: &PointCloud,
    transform_b_to_a: &SimilarityTransform,
    voxel: f64,
) -> Result<PointCloud> {
    let moved = b.transformed(transform_b_to_a);
    voxel_downsample(&a.concat(&moved), voxel)
}
