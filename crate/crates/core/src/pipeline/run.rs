use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlignMode, GeneratorConfig, PipelineConfig, ReconstructorConfig, SceneSource};
use super::ports::{
    depth_name, frame_name, GenerationRequest, GeneratorPort, NoisyReconstructor, OracleGenerator,
    OracleReconstructor, ReconstructorPort, ReplayGenerator, StartFrame, CAMS_NAME,
};
use super::scene::SyntheticScene;
use crate::error::{Error, Result, StageExt};
use crate::eval::{auc_from_sweep, cam_metrics, CamMetrics, PcdDistances, PcdMetrics};
use crate::geometry::{
    backproject, backproject_colored, default_split_angles, pano_depth_to_cloud,
    pano_to_perspective, CameraPose, CameraView, ColorImage, DepthMap,
};
use crate::io::{write_cameras, write_json, write_pfm, write_ply, write_png, PlyEncoding};
use crate::memory::{align_overlap, assemble_ggm, Cache3D, Frame, ImageRef, MemoryBank, SourceTag};
use crate::pointcloud::{
    icp_scale_refine, IcpOptions, PointCloud, SimilarityTransform, TransformRecord, WORLD_FRAME,
};
use crate::retrieval::plan_retrieval;
use crate::stereo::make_pointmap_pair;
use crate::trajectory::{all_orders, generated_frame_id, rank_orders, synthesize};

pub const REPORT_NAME: &str = "report.json";
pub const STATUS_NAME: &str = "status.json";
pub const MERGED_NAME: &str = "merged.ply";
pub const GT_NAME: &str = "gt.ply";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgmSummary {
    pub reference_points: usize,
    pub auxiliary_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    #[serde(rename = "F")]
    pub f: usize,
    /// Targets that received a reference.
    pub attached: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub kind: String,
    /// Artifact directory relative to the output root.
    pub dir: String,
    pub frames: usize,
    pub ggm: GgmSummary,
    pub retrieval: RetrievalSummary,
    pub overlap_pairs: usize,
    /// Reconstruction-to-cache similarity.
    pub alignment: TransformRecord,
    /// Reconstructed cameras against the requested ones.
    pub cam: CamMetrics,
    pub noise_rms: Option<f64>,
    pub bank_entries: usize,
    pub cache_points: usize,
    pub cache_generation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub name: String,
    #[serde(flatten)]
    pub metrics: PcdMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gt_points: usize,
    pub pred_points: usize,
    /// Cache-to-ground-truth similarity applied before scoring.
    pub alignment: TransformRecord,
    pub thresholds: Vec<ThresholdResult>,
    pub auc: f64,
    pub auc_max_threshold: f64,
    /// RMS point displacement from reconstruction noise, over all trajectories.
    pub noise_rms: Option<f64>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<&PcdMetrics> {
        self.thresholds
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.metrics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub label: String,
    /// Retrieval score when generated frames join the bank.
    pub incremental: f64,
    /// Retrieval score against the panorama views alone.
    pub pano_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoReport {
    pub views: usize,
    pub panorama_entries: usize,
    pub initial_cache_points: usize,
    /// Every order of the configured kinds, best incremental score first.
    pub order_ranking: Vec<OrderScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub scene: String,
    pub generator: String,
    pub reconstructor: String,
    pub order: String,
    pub voxel: f64,
    pub median_depth: f64,
    pub trajectories: Vec<TrajectoryReport>,
    pub bank_entries: usize,
    pub cache_points: usize,
    pub cache_generation: u64,
    pub eval: Option<EvalReport>,
    pub panorama: Option<PanoReport>,
}

impl PipelineReport {
    /// Largest camera error over all trajectories.
    pub fn max_cam_error(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|t| t.cam.max_error())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Status {
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Ground truth for the final evaluation.
enum GroundTruth {
    /// Exact renders of every visited view (and optionally a panorama).
    Scene {
        scene: Arc<SyntheticScene>,
        pano: Option<(Point3<f64>, u32, u32)>,
    },
    Cloud(PointCloud),
    Absent,
}

struct Session<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    start: StartFrame,
    /// Geometry of the conditioning input, in the world frame.
    reference: PointCloud,
    median_depth: f64,
    bank: MemoryBank,
    cache: Cache3D,
    scene_label: String,
}

fn cache_stem(generation: u64) -> String {
    format!("cache_{generation:02}")
}

fn save_cache(out: &Path, cache: &Cache3D) -> Result<()> {
    let dir = out.join("cache");
    std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    cache.save(&dir, &cache_stem(cache.generation()))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::file(p, e))
}

fn write_status(out: &Path, result: &Result<PipelineReport>) {
    let status = match result {
        Ok(_) => Status {
            status: "ok".into(),
            stage: None,
            error: None,
        },
        Err(e) => Status {
            status: "failed".into(),
            stage: e.stage_name().map(str::to_string),
            error: Some(e.to_string()),
        },
    };
    if let Err(e) = write_json(out.join(STATUS_NAME), &status) {
        log::warn!("could not write {STATUS_NAME}: {e}");
    }
}

fn build_ports(
    cfg: &PipelineConfig,
    scene: Option<&Arc<SyntheticScene>>,
) -> Result<(Box<dyn GeneratorPort>, Box<dyn ReconstructorPort>)> {
    let gen: Box<dyn GeneratorPort> = match &cfg.generator {
        GeneratorConfig::Oracle => {
            let s = scene
                .ok_or_else(|| Error::invalid("the oracle generator needs a synthetic scene"))?;
            Box::new(OracleGenerator::new(s.clone()))
        }
        GeneratorConfig::Replay { dir } => Box::new(ReplayGenerator::new(dir)),
    };
    let recon: Box<dyn ReconstructorPort> = match &cfg.reconstructor {
        ReconstructorConfig::Oracle => Box::new(OracleReconstructor),
        ReconstructorConfig::Noisy { noise } => Box::new(NoisyReconstructor::new(*noise)?),
    };
    Ok((gen, recon))
}

fn load_start(cfg: &PipelineConfig, scene: Option<&SyntheticScene>) -> Result<StartFrame> {
    match (&cfg.scene, scene) {
        (
            SceneSource::Files {
                image,
                depth,
                camera,
                ..
            },
            _,
        ) => {
            let image = crate::io::read_png(image)?;
            let depth = crate::io::read_pfm(depth)?;
            let view = *crate::io::read_cameras(camera)?
                .first()
                .ok_or_else(|| Error::invalid("start camera file is empty"))?;
            let k = &view.intrinsics;
            if image.width != k.width
                || image.height != k.height
                || depth.width() != k.width
                || depth.height() != k.height
            {
                return Err(Error::invalid("start image, depth and camera sizes differ"));
            }
            Ok(StartFrame {
                image,
                depth: Some(depth),
                view,
            })
        }
        (_, Some(s)) => {
            let view = cfg.camera.view()?;
            let (image, depth) = s.render(&view)?;
            Ok(StartFrame {
                image,
                depth: Some(depth),
                view,
            })
        }
        _ => Err(Error::invalid("no scene to take the start frame from")),
    }
}

fn ground_truth(cfg: &PipelineConfig, scene: Option<&Arc<SyntheticScene>>) -> Result<GroundTruth> {
    Ok(match (&cfg.scene, scene) {
        (SceneSource::Files { gt: Some(p), .. }, _) => {
            GroundTruth::Cloud(crate::io::read_ply(p)?.relabeled(WORLD_FRAME))
        }
        (SceneSource::Files { gt: None, .. }, _) => GroundTruth::Absent,
        (_, Some(s)) => GroundTruth::Scene {
            scene: s.clone(),
            pano: None,
        },
        _ => GroundTruth::Absent,
    })
}

fn persist_start(out: &Path, start: &StartFrame) -> Result<()> {
    let dir = out.join("start");
    mkdir(&dir)?;
    write_png(dir.join(frame_name(0)), &start.image)?;
    if let Some(d) = &start.depth {
        write_pfm(dir.join(depth_name(0)), d)?;
    }
    write_cameras(dir.join(CAMS_NAME), &[start.view])
}

/// Runs the configured pipeline with the ports named in the config.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate().stage("config")?;
    let scene = cfg.scene.synthetic().stage("load")?.map(Arc::new);
    let (mut gen, mut recon) = build_ports(cfg, scene.as_ref()).stage("load")?;
    run_pipeline_with(cfg, gen.as_mut(), recon.as_mut())
}

/// As [`run_pipeline`] with caller-supplied ports.
pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    gen: &mut dyn GeneratorPort,
    recon: &mut dyn ReconstructorPort,
) -> Result<PipelineReport> {
    let out = cfg.output_dir.clone();
    mkdir(&out).stage("setup")?;
    let result = (|| {
        cfg.validate().stage("config")?;
        let scene = cfg.scene.synthetic().stage("load")?.map(Arc::new);
        let start = load_start(cfg, scene.as_deref()).stage("load")?;
        persist_start(&out, &start).stage("load")?;
        let depth = start
            .depth
            .as_ref()
            .expect("loaded start frames carry depth");
        let median_depth = depth
            .median()
            .ok_or_else(|| Error::invalid("start depth has no valid pixels"))
            .stage("load")?;
        let reference = backproject_colored(depth, &start.image, &start.view).stage("load")?;
        let bank = MemoryBank::new(cfg.memory.bank_stride)
            .and_then(|b| {
                b.insert(
                    &[Frame::new(
                        ImageRef::in_memory(start.image.clone()),
                        start.view,
                    )],
                    SourceTag::Initial,
                )
            })
            .stage("load")?;
        let cache = Cache3D::seeded(&reference, &[start.view], cfg.memory.voxel).stage("load")?;
        let gt = ground_truth(cfg, scene.as_ref()).stage("load")?;
        let session = Session {
            cfg,
            out: out.clone(),
            start,
            reference,
            median_depth,
            bank,
            cache,
            scene_label: cfg.scene.label(),
        };
        execute(session, gen, recon, gt, None)
    })();
    write_status(&out, &result);
    result
}

/// Panorama-seeded run: 27 perspective views enter the bank, the lifted
/// panorama seeds the cache, then the trajectories run from the center
/// view. `pano_depth` holds ray distances.
pub fn run_panorama(
    cfg: &PipelineConfig,
    pano: &ColorImage,
    pano_depth: Option<&DepthMap>,
) -> Result<PipelineReport> {
    let out = cfg.output_dir.clone();
    mkdir(&out).stage("setup")?;
    let result = (|| {
        cfg.validate().stage("config")?;
        let depth = pano_depth
            .ok_or_else(|| Error::invalid("panorama run needs a panorama depth map"))
            .stage("load")?;
        if depth.width() != pano.width || depth.height() != pano.height {
            return Err(Error::invalid("panorama color and depth sizes differ")).stage("load");
        }
        let scene = cfg.scene.synthetic().stage("load")?.map(Arc::new);
        let (mut gen, mut recon) = build_ports(cfg, scene.as_ref()).stage("load")?;

        let p = &cfg.panorama;
        let views = pano_to_perspective(
            pano,
            p.fov_v_deg,
            p.fov_h_deg,
            &default_split_angles(),
            p.view_width,
            p.view_height,
        )
        .stage("pano_split")?;
        let pano_dir = out.join("panorama");
        mkdir(&pano_dir).stage("pano_split")?;
        let mut frames = Vec::with_capacity(views.len());
        for (i, (img, v)) in views.iter().enumerate() {
            let path = pano_dir.join(format!("view_{i:02}.png"));
            write_png(&path, img).stage("pano_split")?;
            frames.push(Frame::new(
                ImageRef {
                    path: Some(path),
                    image: Some(Arc::new(img.clone())),
                },
                *v,
            ));
        }
        let pano_views: Vec<CameraView> = views.iter().map(|(_, v)| *v).collect();
        write_cameras(pano_dir.join(CAMS_NAME), &pano_views).stage("pano_split")?;
        let bank = MemoryBank::new(cfg.memory.bank_stride)
            .and_then(|b| b.insert(&frames, SourceTag::Panorama))
            .stage("bank_insert")?;

        let cloud = pano_depth_to_cloud(depth, Some(pano), Point3::origin()).stage("load")?;
        let cache = Cache3D::seeded(&cloud, &pano_views, cfg.memory.voxel).stage("load")?;

        // the start camera sits at the panorama center looking along yaw 0
        let start_view = cfg.camera.view().stage("config")?;
        if start_view.pose.translation.norm() > 0.0
            || (start_view.pose.rotation - nalgebra::Matrix3::identity()).amax() > 1e-12
        {
            return Err(Error::invalid(
                "panorama runs start from an identity camera at the panorama center",
            ))
            .stage("config");
        }
        let c = &cfg.camera;
        let (start_image, _) = pano_to_perspective(
            pano,
            c.fov_v_deg,
            c.fov_h_deg,
            &[crate::geometry::ViewAngle {
                yaw_deg: 0.0,
                pitch_deg: 0.0,
            }],
            c.width,
            c.height,
        )
        .stage("pano_split")?
        .remove(0);
        let start = StartFrame {
            image: start_image,
            depth: None,
            view: start_view,
        };
        persist_start(&out, &start).stage("load")?;
        let mut zs: Vec<f64> = cache
            .render(&start.view)
            .iter()
            .flatten()
            .map(|p| start.view.pose.to_camera(p).z)
            .collect();
        if zs.is_empty() {
            return Err(Error::invalid(
                "panorama cache is not visible from the start view",
            ))
            .stage("load");
        }
        zs.sort_by(f64::total_cmp);
        let median_depth = zs[zs.len() / 2];

        let order = cfg.trajectory.order().stage("config")?;
        let opts = cfg.retrieval_options(median_depth);
        let orders = all_orders(&order.kinds(), cfg.trajectory.frames);
        let orders: Vec<_> = orders
            .into_iter()
            .map(|o| {
                crate::trajectory::TrajectoryOrder::new(
                    o.specs()
                        .iter()
                        .map(|s| crate::trajectory::TrajectorySpec {
                            angle_scale: cfg.trajectory.angle_scale,
                            ..*s
                        })
                        .collect(),
                )
            })
            .collect::<Result<_>>()
            .stage("rank_orders")?;
        let inc = rank_orders(&orders, &bank, &start.view, median_depth, true, &opts)
            .stage("rank_orders")?;
        let only = rank_orders(&orders, &bank, &start.view, median_depth, false, &opts)
            .stage("rank_orders")?;
        let order_ranking = inc
            .iter()
            .map(|s| OrderScore {
                label: s.label.clone(),
                incremental: s.score,
                pano_only: only
                    .iter()
                    .find(|o| o.label == s.label)
                    .map_or(0.0, |o| o.score),
            })
            .collect();
        let pano_report = PanoReport {
            views: pano_views.len(),
            panorama_entries: bank.count_tag(SourceTag::Panorama),
            initial_cache_points: cache.cloud().len(),
            order_ranking,
        };

        let gt = match ground_truth(cfg, scene.as_ref()).stage("load")? {
            GroundTruth::Scene { scene, .. } => GroundTruth::Scene {
                scene,
                pano: Some((Point3::origin(), pano.width, pano.height)),
            },
            other => other,
        };
        let session = Session {
            cfg,
            out: out.clone(),
            start,
            reference: cache.cloud().clone(),
            median_depth,
            bank,
            cache,
            scene_label: cfg.scene.label(),
        };
        execute(session, gen.as_mut(), recon.as_mut(), gt, Some(pano_report))
    })();
    write_status(&out, &result);
    result
}

fn execute(
    mut s: Session<'_>,
    gen: &mut dyn GeneratorPort,
    recon: &mut dyn ReconstructorPort,
    gt: GroundTruth,
    panorama: Option<PanoReport>,
) -> Result<PipelineReport> {
    let cfg = s.cfg;
    let order = cfg.trajectory.order().stage("config")?;
    save_cache(&s.out, &s.cache).stage("load")?;
    s.bank.save(s.out.join("bank.json")).stage("load")?;
    let mut reports = Vec::new();
    let mut visited: Vec<CameraView> = vec![s.start.view];
    let mut noise_sq = Vec::new();

    for (t, spec) in order.specs().iter().enumerate() {
        let kind = spec.kind.name();
        log::info!("trajectory {t} ({kind})");
        let rel = format!("trajectories/{kind}");
        let dir = s.out.join(&rel);
        mkdir(&dir).stage("synthesize")?;

        let mut views = synthesize(spec, &s.start.view, s.median_depth).stage("synthesize")?;
        for (i, v) in views.iter_mut().enumerate() {
            v.frame_id = generated_frame_id(t, i);
        }

        let ggm = assemble_ggm(&s.reference, &s.cache, &SimilarityTransform::identity())
            .stage("assemble_ggm")?;
        write_ply(
            dir.join("ggm.ply"),
            &ggm.combined,
            PlyEncoding::BinaryLittleEndian,
        )
        .stage("assemble_ggm")?;

        let opts = cfg.retrieval_options(s.median_depth);
        let plan = plan_retrieval(&views, &s.bank, &opts).stage("plan_retrieval")?;
        write_json(dir.join("retrieval.json"), &plan).stage("plan_retrieval")?;
        let entries = s.bank.entries();
        let references = plan
            .pairs
            .iter()
            .map(|p| match p.entry {
                Some(e) => entries[e].image.load(),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()
            .stage("plan_retrieval")?;

        let pointmaps: Vec<_> = plan
            .pairs
            .par_iter()
            .map(|p| {
                make_pointmap_pair(
                    &views[p.target_index],
                    p.entry.map(|e| &entries[e].view),
                    &s.cache,
                )
            })
            .collect();
        let pm_dir = dir.join("pointmaps");
        mkdir(&pm_dir).stage("make_pointmaps")?;
        for (p, (target, reference)) in plan.pairs.iter().zip(&pointmaps) {
            write_png(
                pm_dir.join(format!("target_{:04}.png", p.target_index)),
                &target.to_color_image(),
            )
            .stage("make_pointmaps")?;
            if let Some(r) = reference {
                write_png(
                    pm_dir.join(format!("reference_{:04}.png", p.target_index)),
                    &r.to_color_image(),
                )
                .stage("make_pointmaps")?;
            }
        }

        let req = GenerationRequest {
            label: kind,
            start: &s.start,
            trajectory: &views,
            ggm: &ggm,
            plan: &plan,
            references: &references,
            pointmaps: &pointmaps,
        };
        let generation = gen
            .generate(&req)
            .and_then(|g| g.validate(&views).map(|_| g))
            .stage("generate")?;
        let mut bank_frames = Vec::with_capacity(views.len());
        for (i, (f, d)) in generation.frames.iter().zip(&generation.depths).enumerate() {
            let path = dir.join(frame_name(i));
            write_png(&path, f).stage("generate")?;
            write_pfm(dir.join(depth_name(i)), d).stage("generate")?;
            bank_frames.push(Frame::new(
                ImageRef {
                    path: Some(path),
                    image: Some(Arc::new(f.clone())),
                },
                views[i],
            ));
        }
        write_cameras(dir.join(CAMS_NAME), &views).stage("generate")?;

        s.bank = s
            .bank
            .insert(&bank_frames, SourceTag::Generated)
            .stage("bank_insert")?;
        s.bank.save(s.out.join("bank.json")).stage("bank_insert")?;

        let rec = recon
            .reconstruct(&generation.frames, &generation.depths, &views)
            .and_then(|r| r.validate(views.len()).map(|_| r))
            .stage("reconstruct")?;
        write_ply(
            dir.join("recon.ply"),
            &rec.cloud,
            PlyEncoding::BinaryLittleEndian,
        )
        .stage("reconstruct")?;
        let rec_views: Vec<CameraView> = views
            .iter()
            .zip(&rec.poses)
            .map(|(v, p)| v.with_pose(*p))
            .collect();
        write_cameras(dir.join("recon_cams.json"), &rec_views).stage("reconstruct")?;
        if let Some(n) = rec.noise_rms {
            noise_sq.push(n * n);
        }

        let grid = rec.grid(0, &views[0]).stage("cache_update")?;
        let pairs = s
            .cache
            .overlap_pairs(&views[0], &grid)
            .stage("cache_update")?;
        let align = align_new_frame(cfg, &s.cache, &grid, &pairs).stage("cache_update")?;
        s.cache = s
            .cache
            .merge_aligned(&rec.cloud, &align, &rec_views)
            .stage("cache_update")?;
        save_cache(&s.out, &s.cache).stage("cache_update")?;
        write_json(dir.join("alignment.json"), &TransformRecord::from(align))
            .stage("cache_update")?;

        let world: Vec<CameraPose> = rec.poses.iter().map(|p| align.apply_pose(p)).collect();
        let truth: Vec<CameraPose> = views.iter().map(|v| v.pose).collect();
        let cam = cam_metrics(&world, &truth).stage("evaluate")?;

        visited.extend_from_slice(&views);
        reports.push(TrajectoryReport {
            kind: kind.to_string(),
            dir: rel,
            frames: views.len(),
            ggm: GgmSummary {
                reference_points: ggm.reference.len(),
                auxiliary_points: ggm.auxiliary.len(),
            },
            retrieval: RetrievalSummary {
                f: plan.f,
                attached: plan.pairs.iter().filter(|p| p.entry.is_some()).count(),
                score: plan.score(),
            },
            overlap_pairs: pairs.len(),
            alignment: align.into(),
            cam,
            noise_rms: rec.noise_rms,
            bank_entries: s.bank.len(),
            cache_points: s.cache.cloud().len(),
            cache_generation: s.cache.generation(),
        });
    }

    let noise_rms = (!noise_sq.is_empty())
        .then(|| (noise_sq.iter().sum::<f64>() / noise_sq.len() as f64).sqrt());
    let eval = evaluate(cfg, &s.out, &s.cache, &visited, gt, noise_rms).stage("evaluate")?;

    let report = PipelineReport {
        scene: s.scene_label,
        generator: gen.name().to_string(),
        reconstructor: recon.name().to_string(),
        order: order.label(),
        voxel: cfg.memory.voxel,
        median_depth: s.median_depth,
        trajectories: reports,
        bank_entries: s.bank.len(),
        cache_points: s.cache.cloud().len(),
        cache_generation: s.cache.generation(),
        eval,
        panorama,
    };
    write_json(s.out.join(REPORT_NAME), &report).stage("report")?;
    Ok(report)
}

/// Umeyama over the pixel pairs, optionally refined by ICP of the first
/// frame onto the cache. The z-buffered cache render keeps the nearest
/// point per pixel, which under depth noise sits in front of the surface
/// and biases the pixel-pair scale low.
fn align_new_frame(
    cfg: &PipelineConfig,
    cache: &Cache3D,
    grid: &[Option<Point3<f64>>],
    pairs: &[(Point3<f64>, Point3<f64>)],
) -> Result<SimilarityTransform> {
    let t = align_overlap(pairs)?;
    if !cfg.memory.refine {
        return Ok(t);
    }
    let src = PointCloud::new(
        grid.iter().flatten().copied().collect(),
        super::ports::RECONSTRUCTION_FRAME,
    )?;
    let opts = IcpOptions {
        trim_quantile: Some(0.8),
        ..IcpOptions::default()
    };
    Ok(icp_scale_refine(&src, cache.cloud(), &t, &opts)?.transform)
}

fn gt_cloud(gt: GroundTruth, visited: &[CameraView]) -> Result<Option<PointCloud>> {
    match gt {
        GroundTruth::Absent => Ok(None),
        GroundTruth::Cloud(c) => Ok(Some(c)),
        GroundTruth::Scene { scene, pano } => {
            let parts = visited
                .par_iter()
                .map(|v| {
                    let (_, d) = scene.render(v)?;
                    backproject(&d, v)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut pts: Vec<Point3<f64>> = parts
                .iter()
                .flat_map(|p| p.positions().iter().copied())
                .collect();
            if let Some((center, w, h)) = pano {
                let (_, d) = scene.render_panorama(center, w, h)?;
                pts.extend_from_slice(pano_depth_to_cloud(&d, None, center)?.positions());
            }
            PointCloud::new(pts, WORLD_FRAME).map(Some)
        }
    }
}

fn evaluate(
    cfg: &PipelineConfig,
    out: &Path,
    cache: &Cache3D,
    visited: &[CameraView],
    gt: GroundTruth,
    noise_rms: Option<f64>,
) -> Result<Option<EvalReport>> {
    let Some(gt) = gt_cloud(gt, visited)? else {
        write_ply(
            out.join(MERGED_NAME),
            cache.cloud(),
            PlyEncoding::BinaryLittleEndian,
        )?;
        return Ok(None);
    };
    let align = match cfg.eval.align {
        AlignMode::None => SimilarityTransform::identity(),
        AlignMode::Icp => {
            icp_scale_refine(
                cache.cloud(),
                &gt,
                &SimilarityTransform::identity(),
                &IcpOptions::default(),
            )?
            .transform
        }
    };
    let pred = cache.cloud().transformed(&align);
    write_ply(
        out.join(MERGED_NAME),
        &pred,
        PlyEncoding::BinaryLittleEndian,
    )?;
    write_ply(out.join(GT_NAME), &gt, PlyEncoding::BinaryLittleEndian)?;

    let d = PcdDistances::new(&pred, &gt)?;
    let threshold = cfg.f1_threshold();
    let mut thresholds = vec![ThresholdResult {
        name: "primary".into(),
        metrics: d.at(threshold)?,
    }];
    if let Some(n) = noise_rms.filter(|n| *n > 0.0) {
        thresholds.push(ThresholdResult {
            name: "noise".into(),
            metrics: d.at(cfg.eval.noise_sigmas * n)?,
        });
    }
    let steps = cfg.eval.auc_steps;
    let sweep = (1..=steps)
        .map(|k| d.at(threshold * k as f64 / steps as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(EvalReport {
        gt_points: gt.len(),
        pred_points: pred.len(),
        alignment: align.into(),
        thresholds,
        auc: auc_from_sweep(&sweep),
        auc_max_threshold: threshold,
        noise_rms,
    }))
}
