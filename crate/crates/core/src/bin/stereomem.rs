use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Point3;

use stereomem::dmd::{run_toy, ToyConfig};
use stereomem::error::StageExt;
use stereomem::eval::{auc_from_sweep, cam_metrics, cam_table, pcd_sweep, pcd_table};
use stereomem::geometry::{
    backproject, backproject_colored, default_split_angles, pano_to_perspective, CameraView,
};
use stereomem::io::{
    read_cameras, read_pfm, read_ply, read_png, read_raw_depth, write_cameras, write_json,
    write_ply, write_png, PlyEncoding,
};
use stereomem::memory::MemoryBank;
use stereomem::pipeline::{run_panorama, run_pipeline, PipelineConfig};
use stereomem::pointcloud::{
    icp_scale_refine, umeyama, IcpOptions, SimilarityTransform, TransformRecord,
};
use stereomem::retrieval::{plan_retrieval, RetrievalOptions};
use stereomem::trajectory::{synthesize, TrajectoryKind, TrajectorySpec, DEFAULT_FRAMES};
use stereomem::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stereomem",
    version,
    about = "Geometry-aware memory tools for camera-guided video generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift a depth map into a PLY point cloud.
    Backproject(BackprojectArgs),
    /// Fit a similarity transform between two clouds.
    Align(AlignArgs),
    /// Pick one reference bank entry per sampled target camera.
    Retrieve(RetrieveArgs),
    /// Write a synthesized camera trajectory.
    Traj(TrajArgs),
    /// Split an equirectangular panorama into perspective views.
    PanoSplit(PanoSplitArgs),
    /// Precision, recall, F1 and AUC between two clouds.
    EvalPcd(EvalPcdArgs),
    /// Rotation, translation and ATE errors between two trajectories.
    EvalCam(EvalCamArgs),
    /// Train the few-step toy student and log the run.
    DmdToy(DmdToyArgs),
    /// Run the generate, reconstruct and cache loop from a config.
    Pipeline(PipelineArgs),
    /// Seed memory from a panorama, then run the pipeline.
    PanoPipeline(PanoPipelineArgs),
}

#[derive(Args)]
struct BackprojectArgs {
    /// PFM file, or raw float32 grid with a .json sidecar.
    #[arg(long)]
    depth: PathBuf,
    /// Camera JSON (a single view or a list).
    #[arg(long)]
    camera: PathBuf,
    /// Which camera of the list to use.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Optional PNG to color the points.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Refine with nearest-neighbor ICP. Without it the clouds must be in
    /// point-to-point correspondence.
    #[arg(long)]
    icp: bool,
    /// Rigid fit only.
    #[arg(long)]
    no_scale: bool,
    /// Match in both directions during ICP; for clouds of the same surface.
    #[arg(long)]
    symmetric: bool,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Fraction of closest pairs kept per ICP step.
    #[arg(long, default_value_t = 0.9)]
    trim: f64,
    /// Write the source cloud mapped into the target frame.
    #[arg(long)]
    aligned: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Scene median depth; sets the frustum near/far planes.
    #[arg(long, default_value_t = 1.0)]
    median_depth: f64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    floor: Option<f64>,
}

#[derive(Args)]
struct TrajArgs {
    /// up, left, right or orbit.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = DEFAULT_FRAMES)]
    frames: usize,
    #[arg(long)]
    median_depth: f64,
    /// Start camera JSON; defaults to a 64x48 identity camera.
    #[arg(long)]
    start: Option<PathBuf>,
    /// Override the default angle, in degrees.
    #[arg(long)]
    angle: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    angle_scale: f64,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PanoSplitArgs {
    #[arg(long)]
    pano: PathBuf,
    #[arg(long, default_value_t = 120.0)]
    fov_h: f64,
    #[arg(long, default_value_t = 90.0)]
    fov_v: f64,
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 384)]
    height: u32,
    /// Output directory for view_NN.png and cams.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalPcdArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated distance thresholds.
    #[arg(long, value_delimiter = ',', required = true)]
    thresholds: Vec<f64>,
    /// Write metrics JSON here as well.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCamArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct DmdToyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training log CSV.
    #[arg(long, default_value = "dmd_log.csv")]
    log: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replaces output_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PanoPipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Equirectangular PNG; rendered from the config's scene when absent.
    #[arg(long)]
    pano: Option<PathBuf>,
    /// Panorama ray distances (PFM), required with --pano.
    #[arg(long)]
    depth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_depth(path: &Path) -> Result<stereomem::geometry::DepthMap> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
    {
        read_pfm(path)
    } else {
        read_raw_depth(path)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(value)?
    )?;
    Ok(())
}

fn backproject_cmd(a: &BackprojectArgs) -> Result<()> {
    let depth = read_depth(&a.depth).stage("load")?;
    let views = read_cameras(&a.camera).stage("load")?;
    let view = views
        .get(a.index)
        .ok_or_else(|| Error::invalid(format!("camera {} not in {}", a.index, a.camera.display())))
        .stage("load")?;
    let image = a.image.as_ref().map(read_png).transpose().stage("load")?;
    let cloud = match &image {
        Some(img) => backproject_colored(&depth, img, view),
        None => backproject(&depth, view),
    }
    .stage("backproject")?;
    let enc = if a.ascii {
        PlyEncoding::Ascii
    } else {
        PlyEncoding::BinaryLittleEndian
    };
    write_ply(&a.out, &cloud, enc).stage("write")?;
    eprintln!("{} points", cloud.len());
    Ok(())
}

fn align_cmd(a: &AlignArgs) -> Result<()> {
    let src = read_ply(&a.source).stage("load")?;
    let dst = read_ply(&a.target).stage("load")?;
    let with_scale = !a.no_scale;
    let t = if a.icp {
        let init = if src.len() == dst.len() {
            umeyama(src.positions(), dst.positions(), with_scale)
                .unwrap_or_else(|_| SimilarityTransform::identity())
        } else {
            SimilarityTransform::identity()
        };
        let opts = IcpOptions {
            max_iters: a.max_iters,
            trim_quantile: Some(a.trim),
            with_scale,
            symmetric: a.symmetric,
            ..IcpOptions::default()
        };
        let r = icp_scale_refine(&src, &dst, &init, &opts).stage("align")?;
        eprintln!(
            "icp: {} iterations, residual {:.3e}",
            r.iterations,
            r.final_residual()
        );
        r.transform
    } else {
        umeyama(src.positions(), dst.positions(), with_scale).stage("align")?
    };
    write_json(&a.out, &TransformRecord::from(t)).stage("write")?;
    if let Some(p) = &a.aligned {
        write_ply(
            p,
            &src.transformed(&t).relabeled(dst.frame()),
            PlyEncoding::BinaryLittleEndian,
        )
        .stage("write")?;
    }
    print_json(&TransformRecord::from(t))
}

fn retrieve_cmd(a: &RetrieveArgs) -> Result<()> {
    let targets = read_cameras(&a.targets).stage("load")?;
    let bank = MemoryBank::load(&a.bank).stage("load")?;
    let mut opts = RetrievalOptions::from_median_depth(a.median_depth);
    if let Some(s) = a.samples {
        opts.samples = s;
    }
    if let Some(s) = a.seed {
        opts.seed = s;
    }
    if let Some(f) = a.floor {
        opts.floor = f;
    }
    let plan = plan_retrieval(&targets, &bank, &opts).stage("plan_retrieval")?;
    write_json(&a.out, &plan).stage("write")?;
    eprintln!("{} pairs, score {:.4}", plan.pairs.len(), plan.score());
    Ok(())
}

fn traj_cmd(a: &TrajArgs) -> Result<()> {
    let kind: TrajectoryKind = a.kind.parse().stage("traj")?;
    let start: CameraView = match &a.start {
        Some(p) => *read_cameras(p)
            .stage("load")?
            .first()
            .ok_or_else(|| Error::invalid("start camera file is empty"))
            .stage("load")?,
        None => {
            let k = stereomem::geometry::Intrinsics::from_fov(90.0, 70.0, 64, 48)?;
            CameraView::new(k, stereomem::geometry::CameraPose::identity(), 0)
        }
    };
    let mut spec = TrajectorySpec::new(kind, a.frames);
    if let Some(d) = a.angle {
        spec.angle_deg = d;
    }
    spec.angle_scale = a.angle_scale;
    let views = synthesize(&spec, &start, a.median_depth).stage("traj")?;
    match &a.out {
        Some(p) => write_cameras(p, &views).stage("write"),
        None => {
            let tmp: Vec<_> = views
                .iter()
                .map(stereomem::io::CameraRecord::from)
                .collect();
            print_json(&tmp)
        }
    }
}

fn pano_split_cmd(a: &PanoSplitArgs) -> Result<()> {
    let pano = read_png(&a.pano).stage("load")?;
    let views = pano_to_perspective(
        &pano,
        a.fov_v,
        a.fov_h,
        &default_split_angles(),
        a.width,
        a.height,
    )
    .stage("pano_split")?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Error::file(&a.out, e))
        .stage("write")?;
    for (i, (img, _)) in views.iter().enumerate() {
        write_png(a.out.join(format!("view_{i:02}.png")), img).stage("write")?;
    }
    let cams: Vec<_> = views.iter().map(|(_, v)| *v).collect();
    write_cameras(a.out.join("cams.json"), &cams).stage("write")?;
    eprintln!("{} views", cams.len());
    Ok(())
}

#[derive(serde::Serialize)]
struct PcdOutput {
    metrics: Vec<stereomem::eval::PcdMetrics>,
    auc: f64,
}

fn eval_pcd_cmd(a: &EvalPcdArgs) -> Result<()> {
    let pred = read_ply(&a.pred).stage("load")?;
    let gt = read_ply(&a.gt).stage("load")?;
    let metrics = pcd_sweep(&pred, &gt, &a.thresholds).stage("eval")?;
    let out = PcdOutput {
        auc: auc_from_sweep(&metrics),
        metrics,
    };
    print!("{}", pcd_table(&out.metrics));
    println!("\nAUC: {:.6}", out.auc);
    if let Some(p) = &a.json {
        write_json(p, &out).stage("write")?;
    }
    Ok(())
}

fn eval_cam_cmd(a: &EvalCamArgs) -> Result<()> {
    let pred: Vec<_> = read_cameras(&a.pred)
        .stage("load")?
        .iter()
        .map(|v| v.pose)
        .collect();
    let gt: Vec<_> = read_cameras(&a.gt)
        .stage("load")?
        .iter()
        .map(|v| v.pose)
        .collect();
    let m = cam_metrics(&pred, &gt).stage("eval")?;
    print!("{}", cam_table(&[(a.pred.display().to_string(), m)]));
    if let Some(p) = &a.json {
        write_json(p, &m).stage("write")?;
    }
    Ok(())
}

fn dmd_toy_cmd(a: &DmdToyArgs) -> Result<()> {
    let cfg: ToyConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::file(p, e))
                .stage("load")?;
            toml::from_str(&text)
                .map_err(|e| Error::format("dmd config", e.to_string()))
                .stage("load")?
        }
        None => ToyConfig::default(),
    };
    let (_, report, log) = run_toy(&cfg).stage("train")?;
    log.write_csv(&a.log).stage("write")?;
    if let Some(p) = &a.report {
        write_json(p, &report).stage("write")?;
    }
    print_json(&report)
}

fn load_config(path: &Path, out: &Option<PathBuf>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path).stage("config")?;
    if let Some(o) = out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn pipeline_cmd(a: &PipelineArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.out)?;
    let r = run_pipeline(&cfg)?;
    summarize(&r);
    Ok(())
}

fn pano_pipeline_cmd(a: &PanoPipelineArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.out)?;
    let (pano, depth) = match &a.pano {
        Some(p) => (
            read_png(p).stage("load")?,
            a.depth.as_ref().map(read_pfm).transpose().stage("load")?,
        ),
        None => {
            let scene = cfg
                .scene
                .synthetic()
                .stage("load")?
                .ok_or_else(|| Error::invalid("no --pano given and the scene is not synthetic"))
                .stage("load")?;
            let h = cfg.panorama.height;
            let (img, d) = scene
                .render_panorama(Point3::origin(), 2 * h, h)
                .stage("load")?;
            (img, Some(d))
        }
    };
    let r = run_panorama(&cfg, &pano, depth.as_ref())?;
    summarize(&r);
    Ok(())
}

fn summarize(r: &stereomem::pipeline::PipelineReport) {
    println!("scene {} ({} + {})", r.scene, r.generator, r.reconstructor);
    for t in &r.trajectories {
        println!(
            "  {:<6} frames {:>3}  cache {:>7} pts  cam err {:.3e}",
            t.kind,
            t.frames,
            t.cache_points,
            t.cam.max_error()
        );
    }
    if let Some(e) = &r.eval {
        for t in &e.thresholds {
            println!(
                "  F1[{}] @ {:.4} = {:.4}",
                t.name, t.metrics.threshold, t.metrics.f1
            );
        }
        println!("  AUC = {:.4}", e.auc);
    }
    if let Some(p) = &r.panorama {
        if let Some(best) = p.order_ranking.first() {
            println!("  best order {} ({:.3})", best.label, best.incremental);
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Backproject(a) => ("backproject", backproject_cmd(a)),
        Command::Align(a) => ("align", align_cmd(a)),
        Command::Retrieve(a) => ("retrieve", retrieve_cmd(a)),
        Command::Traj(a) => ("traj", traj_cmd(a)),
        Command::PanoSplit(a) => ("pano-split", pano_split_cmd(a)),
        Command::EvalPcd(a) => ("eval-pcd", eval_pcd_cmd(a)),
        Command::EvalCam(a) => ("eval-cam", eval_cam_cmd(a)),
        Command::DmdToy(a) => ("dmd-toy", dmd_toy_cmd(a)),
        Command::Pipeline(a) => ("pipeline", pipeline_cmd(a)),
        Command::PanoPipeline(a) => ("pano-pipeline", pano_pipeline_cmd(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Stage { stage, source }) => {
            eprintln!("stereomem {name}: error [{stage}]: {source}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("stereomem {name}: error [{name}]: {e}");
            ExitCode::FAILURE
        }
    }
}
