//! Generator and reconstructor interfaces with oracle, replay and noisy
//! implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use crate::error::{Error, Result};
use crate::geometry::{
    backproject_colored, backproject_grid, CameraPose, CameraView, ColorImage, DepthMap,
};
use crate::memory::GgmCondition;
use crate::pointcloud::{PointCloud, SimilarityTransform};
use crate::retrieval::RetrievalPlan;
use crate::stereo::PointMapImage;

pub const RECONSTRUCTION_FRAME: &str = "reconstruction";

/// The conditioning frame every trajectory starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct StartFrame {
    pub image: ColorImage,
    pub depth: Option<DepthMap>,
    pub view: CameraView,
}

/// Everything a camera-controlled generator is conditioned on.
pub struct GenerationRequest<'a> {
    /// Trajectory name; replay looks frames up under it.
    pub label: &'a str,
    pub start: &'a StartFrame,
    pub trajectory: &'a [CameraView],
    pub ggm: &'a GgmCondition,
    pub plan: &'a RetrievalPlan,
    /// Retrieved reference image per plan pair.
    pub references: &'a [Option<ColorImage>],
    /// Target and reference pointmaps per plan pair.
    pub pointmaps: &'a [(PointMapImage, Option<PointMapImage>)],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub frames: Vec<ColorImage>,
    pub depths: Vec<DepthMap>,
}

impl Generation {
    /// Frame count, sizes and at least one valid depth per frame.
    pub fn validate(&self, trajectory: &[CameraView]) -> Result<()> {
        if self.frames.len() != trajectory.len() || self.depths.len() != trajectory.len() {
            return Err(Error::invalid(format!(
                "generator returned {} frames and {} depth maps for a {}-pose trajectory",
                self.frames.len(),
                self.depths.len(),
                trajectory.len()
            )));
        }
        for (i, ((f, d), v)) in self
            .frames
            .iter()
            .zip(&self.depths)
            .zip(trajectory)
            .enumerate()
        {
            let k = &v.intrinsics;
            if f.width != k.width
                || f.height != k.height
                || d.width() != k.width
                || d.height() != k.height
            {
                return Err(Error::invalid(format!(
                    "frame {i} does not match the {}x{} camera",
                    k.width, k.height
                )));
            }
            if d.valid_count() == 0 {
                return Err(Error::invalid(format!("frame {i} has no valid depth")));
            }
        }
        Ok(())
    }
}

pub trait GeneratorPort {
    fn name(&self) -> &str;
    fn generate(&mut self, req: &GenerationRequest<'_>) -> Result<Generation>;
}

/// Renders the requested views of an analytic scene.
pub struct OracleGenerator {
    scene: Arc<SyntheticScene>,
}

impl OracleGenerator {
    pub fn new(scene: Arc<SyntheticScene>) -> Self {
        OracleGenerator { scene }
    }
}

impl GeneratorPort for OracleGenerator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn generate(&mut self, req: &GenerationRequest<'_>) -> Result<Generation> {
        let mut frames = Vec::with_capacity(req.trajectory.len());
        let mut depths = Vec::with_capacity(req.trajectory.len());
        for v in req.trajectory {
            let (img, d) = self.scene.render(v)?;
            frames.push(img);
            depths.push(d);
        }
        Ok(Generation { frames, depths })
    }
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.png")
}

pub fn depth_name(i: usize) -> String {
    format!("depth_{i:04}.pfm")
}

pub const CAMS_NAME: &str = "cams.json";

/// Pose agreement required between `cams.json` and the request.
const REPLAY_POSE_TOL: f64 = 1e-6;

/// Reads pre-generated frames from `<dir>/<label>/`: `frame_%04d.png`,
/// `depth_%04d.pfm` and `cams.json`.
pub struct ReplayGenerator {
    dir: PathBuf,
}

impl ReplayGenerator {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayGenerator { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn count_frames(dir: &Path) -> Result<usize> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut n = 0;
    for e in entries {
        let name = e.map_err(|e| Error::file(dir, e))?.file_name();
        let name = name.to_string_lossy();
        let is_frame = name
            .strip_prefix("frame_")
            .and_then(|r| r.strip_suffix(".png"))
            .is_some_and(|d| d.len() == 4 && d.bytes().all(|b| b.is_ascii_digit()));
        n += is_frame as usize;
    }
    Ok(n)
}

impl GeneratorPort for ReplayGenerator {
    fn name(&self) -> &str {
        "replay"
    }

    fn generate(&mut self, req: &GenerationRequest<'_>) -> Result<Generation> {
        let dir = self.dir.join(req.label);
        let n = req.trajectory.len();
        let found = count_frames(&dir)?;
        if found != n {
            return Err(Error::invalid(format!(
                "{} holds {found} frames, trajectory has {n} poses",
                dir.display()
            )));
        }
        let cams = crate::io::read_cameras(dir.join(CAMS_NAME))?;
        if cams.len() != n {
            return Err(Error::invalid(format!(
                "{CAMS_NAME} lists {} cameras, expected {n}",
                cams.len()
            )));
        }
        for (i, (c, v)) in cams.iter().zip(req.trajectory).enumerate() {
            let dr = (c.pose.rotation - v.pose.rotation).abs().max();
            let dt = (c.pose.translation - v.pose.translation).abs().max();
            let (a, b) = (&c.intrinsics, &v.intrinsics);
            let dk = [a.fx - b.fx, a.fy - b.fy, a.cx - b.cx, a.cy - b.cy]
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let same_size = a.width == b.width && a.height == b.height;
            if dr > REPLAY_POSE_TOL || dt > REPLAY_POSE_TOL || dk > REPLAY_POSE_TOL || !same_size {
                return Err(Error::invalid(format!(
                    "replayed camera {i} does not match the requested trajectory"
                )));
            }
        }
        let mut frames = Vec::with_capacity(n);
        let mut depths = Vec::with_capacity(n);
        for i in 0..n {
            frames.push(crate::io::read_png(dir.join(frame_name(i)))?);
            depths.push(crate::io::read_pfm(dir.join(depth_name(i)))?);
        }
        Ok(Generation { frames, depths })
    }
}

/// Reconstruction in its own gauge: the first camera's frame, scaled to
/// unit median first-frame depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub cloud: PointCloud,
    pub poses: Vec<CameraPose>,
    pub depths: Vec<DepthMap>,
    /// RMS displacement of the lifted points from their noise-free
    /// positions, in input units. `None` for exact reconstructions.
    pub noise_rms: Option<f64>,
}

impl Reconstruction {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.poses.len() != n || self.depths.len() != n {
            return Err(Error::invalid(format!(
                "reconstruction returned {} poses and {} depth maps for {n} frames",
                self.poses.len(),
                self.depths.len()
            )));
        }
        if self.cloud.is_empty() {
            return Err(Error::invalid("reconstruction produced no points"));
        }
        Ok(())
    }

    /// Per-pixel points of frame `i` in the reconstruction frame.
    pub fn grid(
        &self,
        i: usize,
        intrinsics_of: &CameraView,
    ) -> Result<Vec<Option<nalgebra::Point3<f64>>>> {
        backproject_grid(&self.depths[i], &intrinsics_of.with_pose(self.poses[i]))
    }
}

pub trait ReconstructorPort {
    fn name(&self) -> &str;
    fn reconstruct(
        &mut self,
        frames: &[ColorImage],
        depths: &[DepthMap],
        views: &[CameraView],
    ) -> Result<Reconstruction>;
}

fn check_inputs(frames: &[ColorImage], depths: &[DepthMap], views: &[CameraView]) -> Result<()> {
    if frames.len() != views.len() || depths.len() != views.len() || views.is_empty() {
        return Err(Error::invalid(format!(
            "reconstruction needs matching non-empty inputs, got {} frames, {} depths, {} views",
            frames.len(),
            depths.len(),
            views.len()
        )));
    }
    Ok(())
}

/// World-to-gauge similarity: camera 0's frame with unit median depth.
fn gauge(first: &CameraView, first_depth: &DepthMap) -> Result<SimilarityTransform> {
    let md = first_depth
        .median()
        .ok_or_else(|| Error::invalid("first frame has no valid depth"))?;
    let s = 1.0 / md;
    let rt = first.pose.rotation.transpose();
    SimilarityTransform::new(s, rt, -(s * rt * first.pose.translation))
}

fn lift(
    frames: &[ColorImage],
    depths: &[DepthMap],
    views: &[CameraView],
    g: &SimilarityTransform,
) -> Result<Reconstruction> {
    let mut cloud = PointCloud::empty(RECONSTRUCTION_FRAME);
    for ((f, d), v) in frames.iter().zip(depths).zip(views) {
        cloud = cloud.concat(&backproject_colored(d, f, v)?);
    }
    let depths = depths
        .iter()
        .map(|d| {
            let vals = d.values().iter().map(|z| z * g.scale).collect();
            DepthMap::with_mask(d.width(), d.height(), vals, d.valid_mask())
        })
        .collect::<Result<_>>()?;
    Ok(Reconstruction {
        cloud: cloud.transformed(g).relabeled(RECONSTRUCTION_FRAME),
        poses: views.iter().map(|v| g.apply_pose(&v.pose)).collect(),
        depths,
        noise_rms: None,
    })
}

/// Back-projects the supplied depths with the supplied cameras.
#[derive(Debug, Clone, Default)]
pub struct OracleReconstructor;

impl ReconstructorPort for OracleReconstructor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn reconstruct(
        &mut self,
        frames: &[ColorImage],
        depths: &[DepthMap],
        views: &[CameraView],
    ) -> Result<Reconstruction> {
        check_inputs(frames, depths, views)?;
        lift(frames, depths, views, &gauge(&views[0], &depths[0])?)
    }
}

/// Perturbation applied by [`NoisyReconstructor`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Per-pixel depth noise standard deviation as a fraction of depth.
    pub depth_rel: f64,
    /// Per-frame rotation noise standard deviation in degrees.
    pub rot_deg: f64,
    /// Per-frame translation noise standard deviation per axis.
    pub trans: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            depth_rel: 0.01,
            rot_deg: 0.0,
            trans: 0.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if [self.depth_rel, self.rot_deg, self.trans]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid(
                "noise levels must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Oracle with multiplicative Gaussian depth noise and optional pose noise.
/// Consecutive calls draw fresh noise from one seeded stream.
pub struct NoisyReconstructor {
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoisyReconstructor {
    pub fn new(noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        Ok(NoisyReconstructor {
            noise,
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
        })
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn perturb_pose(&mut self, pose: &CameraPose) -> CameraPose {
        if self.noise.rot_deg == 0.0 && self.noise.trans == 0.0 {
            return *pose;
        }
        let axis = Vector3::new(self.normal(), self.normal(), self.normal());
        let angle = self.noise.rot_deg.to_radians() * self.normal();
        let r = Unit::try_new(axis, 1e-12)
            .map(|a| Rotation3::from_axis_angle(&a, angle).into_inner())
            .unwrap_or_else(nalgebra::Matrix3::identity);
        let dt = Vector3::new(self.normal(), self.normal(), self.normal()) * self.noise.trans;
        CameraPose {
            rotation: r * pose.rotation,
            translation: pose.translation + dt,
        }
    }
}

impl ReconstructorPort for NoisyReconstructor {
    fn name(&self) -> &str {
        "noisy"
    }

    fn reconstruct(
        &mut self,
        frames: &[ColorImage],
        depths: &[DepthMap],
        views: &[CameraView],
    ) -> Result<Reconstruction> {
        check_inputs(frames, depths, views)?;
        let mut noisy_depths = Vec::with_capacity(depths.len());
        let mut noisy_views = Vec::with_capacity(views.len());
        let (mut sq, mut count) = (0.0, 0usize);
        for (d, v) in depths.iter().zip(views) {
            let vals: Vec<f64> = d
                .values()
                .iter()
                .map(|z| z * (1.0 + self.noise.depth_rel * self.normal()))
                .collect();
            let nd = DepthMap::with_mask(d.width(), d.height(), vals, d.valid_mask())?;
            let nv = v.with_pose(self.perturb_pose(&v.pose));
            let exact = backproject_grid(d, v)?;
            let moved = backproject_grid(&nd, &nv)?;
            for (a, b) in exact.iter().zip(&moved) {
                if let (Some(a), Some(b)) = (a, b) {
                    sq += (a - b).norm_squared();
                    count += 1;
                }
            }
            noisy_depths.push(nd);
            noisy_views.push(nv);
        }
        let g = gauge(&noisy_views[0], &noisy_depths[0])?;
        let mut rec = lift(frames, &noisy_depths, &noisy_views, &g)?;
        rec.noise_rms = Some(if count > 0 {
            (sq / count as f64).sqrt()
        } else {
            0.0
        });
        Ok(rec)
    }
}
