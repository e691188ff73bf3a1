use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::ports::NoiseModel;
use super::scene::SyntheticScene;
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, CameraView, Intrinsics};
use crate::memory::DEFAULT_BANK_STRIDE;
use crate::retrieval::frustum::MIN_SAMPLES;
use crate::retrieval::{RetrievalOptions, DEFAULT_OVERLAP_FLOOR, DEFAULT_SAMPLES};
use crate::trajectory::{TrajectoryKind, TrajectoryOrder, TrajectorySpec, DEFAULT_FRAMES};

/// Where the start frame (and ground truth) come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSource {
    /// A built-in analytic scene.
    Preset { name: String },
    /// An analytic scene spelled out in the config.
    Inline { scene: SyntheticScene },
    /// Start frame on disk: PNG image, PFM depth and a camera JSON. The
    /// optional PLY is the ground-truth cloud for evaluation.
    Files {
        image: PathBuf,
        depth: PathBuf,
        camera: PathBuf,
        #[serde(default)]
        gt: Option<PathBuf>,
    },
}

impl SceneSource {
    pub fn synthetic(&self) -> Result<Option<SyntheticScene>> {
        match self {
            SceneSource::Preset { name } => SyntheticScene::preset(name).map(Some),
            SceneSource::Inline { scene } => {
                scene.validate()?;
                Ok(Some(scene.clone()))
            }
            SceneSource::Files { .. } => Ok(None),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SceneSource::Preset { name } => name.clone(),
            SceneSource::Inline { scene } => scene.name.clone(),
            SceneSource::Files { image, .. } => image
                .file_stem()
                .map_or_else(|| "files".into(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

/// Start camera for synthetic scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    /// Camera center; the origin when absent.
    pub eye: Option<[f64; 3]>,
    /// Look-at point; straight down `+z` when absent.
    pub target: Option<[f64; 3]>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width: 64,
            height: 48,
            fov_h_deg: 90.0,
            fov_v_deg: 70.0,
            eye: None,
            target: None,
        }
    }
}

impl CameraConfig {
    pub fn view(&self) -> Result<CameraView> {
        let k = Intrinsics::from_fov(self.fov_h_deg, self.fov_v_deg, self.width, self.height)?;
        let eye = Point3::from(self.eye.unwrap_or([0.0; 3]));
        let pose = match self.target {
            Some(t) => CameraPose::look_at(eye, Point3::from(t), -Vector3::y())?,
            None => CameraPose::new(nalgebra::Matrix3::identity(), eye.coords)?,
        };
        Ok(CameraView::new(k, pose, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub order: Vec<TrajectoryKind>,
    pub frames: usize,
    /// Multiplies every trajectory angle.
    pub angle_scale: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            order: TrajectoryKind::ALL.to_vec(),
            frames: DEFAULT_FRAMES,
            angle_scale: 1.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn order(&self) -> Result<TrajectoryOrder> {
        TrajectoryOrder::new(
            self.order
                .iter()
                .map(|k| TrajectorySpec {
                    angle_scale: self.angle_scale,
                    ..TrajectorySpec::new(*k, self.frames)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub bank_stride: usize,
    /// Cache voxel edge length in scene units.
    pub voxel: f64,
    /// Refine the pixel-pair alignment with scaled ICP of the first frame
    /// onto the cache.
    pub refine: bool,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            bank_stride: DEFAULT_BANK_STRIDE,
            voxel: 0.05,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub samples: usize,
    pub seed: u64,
    pub floor: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let d = RetrievalOptions::from_median_depth(1.0);
        RetrievalConfig {
            samples: DEFAULT_SAMPLES,
            seed: d.seed,
            floor: DEFAULT_OVERLAP_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    /// Renders the synthetic scene.
    #[default]
    Oracle,
    /// Reads `<dir>/<trajectory>/frame_%04d.png`, `depth_%04d.pfm`, `cams.json`.
    Replay { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconstructorConfig {
    #[default]
    Oracle,
    Noisy {
        #[serde(flatten)]
        noise: NoiseModel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Evaluate the cache in its own frame.
    None,
    /// Refine with scaled ICP onto the ground truth first.
    #[default]
    Icp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// F1 threshold; twice the voxel size when absent.
    pub threshold: Option<f64>,
    /// With a noisy reconstructor, also score at this multiple of the
    /// measured point noise.
    pub noise_sigmas: f64,
    /// Evenly spaced thresholds up to the F1 threshold for the AUC.
    pub auc_steps: usize,
    pub align: AlignMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: None,
            noise_sigmas: 3.0,
            auc_steps: 10,
            align: AlignMode::Icp,
        }
    }
}

/// Panorama rendering and splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanoConfig {
    /// Height of a rendered synthetic panorama; width is twice this.
    pub height: u32,
    pub view_width: u32,
    pub view_height: u32,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
}

impl Default for PanoConfig {
    fn default() -> Self {
        PanoConfig {
            height: 512,
            view_width: 64,
            view_height: 48,
            fov_h_deg: crate::geometry::panorama::DEFAULT_PANO_FOV_H_DEG,
            fov_v_deg: crate::geometry::panorama::DEFAULT_PANO_FOV_V_DEG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub scene: SceneSource,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub reconstructor: ReconstructorConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub panorama: PanoConfig,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn must_exist(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} {} does not exist",
            p.display()
        )))
    }
}

impl PipelineConfig {
    /// Config for a built-in synthetic scene with default settings.
    pub fn synthetic(preset: &str, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            output_dir: output_dir.into(),
            scene: SceneSource::Preset {
                name: preset.into(),
            },
            camera: CameraConfig::default(),
            trajectory: TrajectoryConfig::default(),
            memory: MemoryConfig::default(),
            retrieval: RetrievalConfig::default(),
            generator: GeneratorConfig::default(),
            reconstructor: ReconstructorConfig::default(),
            eval: EvalConfig::default(),
            panorama: PanoConfig::default(),
        }
    }

    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::format("pipeline config", e.to_string()))?;
        rebase(base, &mut cfg.output_dir);
        if let SceneSource::Files {
            image,
            depth,
            camera,
            gt,
        } = &mut cfg.scene
        {
            rebase(base, image);
            rebase(base, depth);
            rebase(base, camera);
            if let Some(g) = gt {
                rebase(base, g);
            }
        }
        if let GeneratorConfig::Replay { dir } = &mut cfg.generator {
            rebase(base, dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a TOML config; paths are relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.view()?;
        let order = self.trajectory.order()?;
        if order.specs().is_empty() {
            return Err(Error::invalid("trajectory order is empty"));
        }
        if self.trajectory.frames < 4 {
            return Err(Error::invalid(
                "trajectories need at least 4 frames for retrieval",
            ));
        }
        if self.memory.bank_stride == 0 {
            return Err(Error::invalid("bank stride must be at least 1"));
        }
        if !(self.memory.voxel > 0.0 && self.memory.voxel.is_finite()) {
            return Err(Error::invalid("voxel size must be positive"));
        }
        if self.retrieval.samples < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "retrieval needs at least {MIN_SAMPLES} samples"
            )));
        }
        if let Some(t) = self.eval.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("evaluation threshold must be positive"));
            }
        }
        if !(self.eval.noise_sigmas > 0.0) || self.eval.auc_steps < 2 {
            return Err(Error::invalid(
                "noise_sigmas must be positive and auc_steps at least 2",
            ));
        }
        match &self.scene {
            SceneSource::Files {
                image,
                depth,
                camera,
                gt,
            } => {
                must_exist(image, "start image")?;
                must_exist(depth, "start depth")?;
                must_exist(camera, "start camera")?;
                if let Some(g) = gt {
                    must_exist(g, "ground-truth cloud")?;
                }
                if self.generator == GeneratorConfig::Oracle {
                    return Err(Error::invalid(
                        "the oracle generator needs a synthetic scene",
                    ));
                }
            }
            other => {
                other.synthetic()?;
            }
        }
        if let GeneratorConfig::Replay { dir } = &self.generator {
            must_exist(dir, "replay directory")?;
        }
        if let ReconstructorConfig::Noisy { noise } = &self.reconstructor {
            noise.validate()?;
        }
        Ok(())
    }

    /// F1 threshold: the configured value or twice the voxel size.
    pub fn f1_threshold(&self) -> f64 {
        self.eval.threshold.unwrap_or(2.0 * self.memory.voxel)
    }

    /// Frustum near/far scale with the median depth of the start frame.
    pub fn retrieval_options(&self, median_depth: f64) -> RetrievalOptions {
        RetrievalOptions {
            samples: self.retrieval.samples,
            seed: self.retrieval.seed,
            floor: self.retrieval.floor,
            ..RetrievalOptions::from_median_depth(median_depth)
        }
    }
}
