use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{render_point_indices, CameraView};
use crate::io::{CameraRecord, PlyEncoding};
use crate::pointcloud::{
    default_voxel_size, merge, umeyama, voxel_downsample, PointCloud, SimilarityTransform,
    WORLD_FRAME,
};

/// Incrementally merged global point cloud. Updates return a new cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache3D {
    cloud: PointCloud,
    views: Vec<CameraView>,
    generation: u64,
    voxel: Option<f64>,
}

impl Default for Cache3D {
    fn default() -> Self {
        Cache3D::new(None)
    }
}

impl Cache3D {
    /// Empty cache. Without a voxel size, the first insertion picks 1% of
    /// its bounding-box diagonal.
    pub fn new(voxel: Option<f64>) -> Self {
        Cache3D {
            cloud: PointCloud::empty(WORLD_FRAME),
            views: Vec::new(),
            generation: 0,
            voxel,
        }
    }

    /// Generation-0 cache holding `cloud` (world frame) voxel-downsampled.
    /// Seeding does not count as an update.
    pub fn seeded(cloud: &PointCloud, views: &[CameraView], voxel: f64) -> Result<Self> {
        Ok(Cache3D {
            cloud: voxel_downsample(cloud, voxel)?.relabeled(WORLD_FRAME),
            views: views.to_vec(),
            generation: 0,
            voxel: Some(voxel),
        })
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn frame(&self) -> &str {
        self.cloud.frame()
    }

    pub fn contributing_views(&self) -> &[CameraView] {
        &self.views
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn voxel(&self) -> Option<f64> {
        self.voxel
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Merges `new_cloud` after aligning it with the overlap pairs
    /// `(point in new_cloud's frame, matching cache point)`. `views` are the
    /// contributing cameras in `new_cloud`'s frame. Also returns the
    /// new-to-cache transform.
    pub fn update_with_transform(
        &self,
        new_cloud: &PointCloud,
        overlap: &[(Point3<f64>, Point3<f64>)],
        views: &[CameraView],
    ) -> Result<(Cache3D, SimilarityTransform)> {
        if self.is_empty() {
            let voxel = match self.voxel {
                Some(v) => Some(v),
                None => Some(default_voxel_size(new_cloud)).filter(|v| *v > 0.0),
            };
            let cloud = match voxel {
                Some(v) => voxel_downsample(new_cloud, v)?,
                None => new_cloud.clone(),
            };
            let next = Cache3D {
                cloud,
                views: [self.views.as_slice(), views].concat(),
                generation: self.generation + 1,
                voxel,
            };
            return Ok((next, SimilarityTransform::identity()));
        }
        let t = align_overlap(overlap)?;
        Ok((self.merge_aligned(new_cloud, &t, views)?, t))
    }

    /// Merges `new_cloud` under a known new-to-cache transform.
    pub fn merge_aligned(
        &self,
        new_cloud: &PointCloud,
        t: &SimilarityTransform,
        views: &[CameraView],
    ) -> Result<Cache3D> {
        let Some(voxel) = self.voxel.filter(|_| !self.is_empty()) else {
            return Err(Error::invalid(
                "cannot merge into an empty cache without alignment",
            ));
        };
        let cloud = merge(&self.cloud, new_cloud, t, voxel)?;
        let mut all_views = self.views.clone();
        all_views.extend(views.iter().map(|v| v.with_pose(t.apply_pose(&v.pose))));
        Ok(Cache3D {
            cloud,
            views: all_views,
            generation: self.generation + 1,
            voxel: Some(voxel),
        })
    }

    pub fn update(
        &self,
        new_cloud: &PointCloud,
        overlap: &[(Point3<f64>, Point3<f64>)],
        views: &[CameraView],
    ) -> Result<Cache3D> {
        self.update_with_transform(new_cloud, overlap, views)
            .map(|(c, _)| c)
    }

    /// Cache point seen through each pixel of `view` (z-buffer, one pixel
    /// per point), row-major.
    pub fn render(&self, view: &CameraView) -> Vec<Option<Point3<f64>>> {
        let pts = self.cloud.positions();
        render_point_indices(pts, view)
            .into_iter()
            .map(|h| h.map(|i| pts[i]))
            .collect()
    }

    /// Pixel-index correspondences between a per-pixel grid of new points
    /// (e.g. a back-projected first frame) and the cache rendered into the
    /// same view, given in the cache frame.
    pub fn overlap_pairs(
        &self,
        view: &CameraView,
        new_grid: &[Option<Point3<f64>>],
    ) -> Result<Vec<(Point3<f64>, Point3<f64>)>> {
        if new_grid.len() != view.intrinsics.pixel_count() {
            return Err(Error::invalid("point grid does not match the view size"));
        }
        Ok(self
            .render(view)
            .into_iter()
            .zip(new_grid)
            .filter_map(|(c, n)| Some(((*n)?, c?)))
            .collect())
    }

    /// Writes `<stem>.ply` and `<stem>.json` (generation, voxel, frame,
    /// contributing views) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        let ply = format!("{stem}.ply");
        crate::io::write_ply(dir.join(&ply), &self.cloud, PlyEncoding::BinaryLittleEndian)?;
        let m = CacheManifest {
            generation: self.generation,
            voxel: self.voxel,
            frame: self.cloud.frame().to_string(),
            cloud: ply,
            contributing_views: self.views.iter().map(CameraRecord::from).collect(),
        };
        crate::io::write_json(dir.join(format!("{stem}.json")), &m)
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let m: CacheManifest = crate::io::read_json(dir.join(format!("{stem}.json")))?;
        let cloud = crate::io::read_ply(dir.join(&m.cloud))?.relabeled(m.frame);
        let views = m
            .contributing_views
            .iter()
            .enumerate()
            .map(|(i, r)| r.to_view(i as u64))
            .collect::<Result<_>>()?;
        Ok(Cache3D {
            cloud,
            views,
            generation: m.generation,
            voxel: m.voxel,
        })
    }
}

pub fn cache_update(
    cache: &Cache3D,
    new_cloud: &PointCloud,
    overlap: &[(Point3<f64>, Point3<f64>)],
    views: &[CameraView],
) -> Result<Cache3D> {
    cache.update(new_cloud, overlap, views)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub generation: u64,
    pub voxel: Option<f64>,
    pub frame: String,
    pub cloud: String,
    pub contributing_views: Vec<CameraRecord>,
}

/// Similarity from overlap pairs. Rendered correspondences include some
/// see-through hits, so pairs far above the median residual are dropped and
/// the fit repeated.
pub fn align_overlap(pairs: &[(Point3<f64>, Point3<f64>)]) -> Result<SimilarityTransform> {
    if pairs.len() < 3 {
        return Err(Error::AlignmentFailed(format!(
            "{} overlap pairs, need at least 3",
            pairs.len()
        )));
    }
    let fail = |e: Error| Error::AlignmentFailed(e.to_string());
    let mut src: Vec<Point3<f64>> = pairs.iter().map(|p| p.0).collect();
    let mut dst: Vec<Point3<f64>> = pairs.iter().map(|p| p.1).collect();
    let mut t = umeyama(&src, &dst, true).map_err(fail)?;
    let floor = 1e-9 * PointCloud::new(dst.clone(), WORLD_FRAME)?.bbox_diagonal();
    for _ in 0..3 {
        let res: Vec<f64> = src
            .iter()
            .zip(&dst)
            .map(|(s, d)| (t.apply(s) - d).norm())
            .collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = (3.0 * sorted[sorted.len() / 2]).max(floor);
        if sorted.last().is_some_and(|m| *m <= cut) {
            break;
        }
        let keep: Vec<usize> = (0..res.len()).filter(|&i| res[i] <= cut).collect();
        if keep.len() < 3 {
            break;
        }
        src = keep.iter().map(|&i| src[i]).collect();
        dst = keep.iter().map(|&i| dst[i]).collect();
        t = umeyama(&src, &dst, true).map_err(fail)?;
    }
    Ok(t)
}
