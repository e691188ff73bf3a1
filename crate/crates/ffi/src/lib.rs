//! C ABI over the stereomem core.
//!
//! Every function returns an [`SmStatus`]; on failure the message is kept
//! per thread and can be fetched with [`sm_last_error_message`]. Point
//! clouds cross the boundary as opaque [`SmCloud`] handles, everything else
//! as plain `#[repr(C)]` structs and caller-owned `f64` buffers. Matrices are
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::{Matrix3, Point3, Vector3};
use stereomem::eval::{cam_metrics, pcd_auc, pcd_f1};
use stereomem::geometry::{backproject, CameraPose, CameraView, DepthMap, Intrinsics};
use stereomem::io::{read_ply, write_ply, PlyEncoding};
use stereomem::memory::{Frame, ImageRef, MemoryBank, SourceTag};
use stereomem::pointcloud::{
    icp_scale_refine, umeyama, IcpOptions, PointCloud, SimilarityTransform, WORLD_FRAME,
};
use stereomem::retrieval::frustum::{frustum_overlap, Frustum};
use stereomem::retrieval::{plan_retrieval, RetrievalOptions};
use stereomem::trajectory::{synthesize, TrajectoryKind, TrajectorySpec};
use stereomem::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Degenerate = 3,
    AlignmentFailed = 4,
    Io = 5,
    Format = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// Opaque point cloud.
pub struct SmCloud(PointCloud);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmSimilarity {
    pub scale: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Camera-to-world pose.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmCamera {
    pub intrinsics: SmIntrinsics,
    pub pose: SmPose,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmIcpOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Fraction of closest pairs kept; values outside (0, 1) keep all.
    pub trim_quantile: f64,
    pub with_scale: bool,
    pub symmetric: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmIcpResult {
    pub transform: SmSimilarity,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmPcdMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmCamMetrics {
    pub rot_err_deg: f64,
    pub trans_err: f64,
    pub ate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmTrajectoryKind {
    Up = 0,
    Left = 1,
    Right = 2,
    Orbit = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmRetrievalPair {
    pub target_index: usize,
    /// Bank index, or -1 when the best overlap is under the floor.
    pub entry: i64,
    pub overlap: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::Duplicate { .. } => SmStatus::InvalidInput,
            Error::Degenerate(_) => SmStatus::Degenerate,
            Error::AlignmentFailed(_) => SmStatus::AlignmentFailed,
            Error::File { .. } | Error::Io(_) => SmStatus::Io,
            Error::Format { .. } | Error::Json(_) | Error::Image(_) => SmStatus::Format,
            _ => SmStatus::Other,
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SmStatus::InvalidInput, msg.into())
}

/// Runs `f`, turning errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SmStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SmStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn cloud<'a>(ptr: *const SmCloud, what: &str) -> Result<&'a PointCloud, Fail> {
    ptr.as_ref().map(|c| &c.0).ok_or_else(|| null(what))
}

unsafe fn path(ptr: *const c_char) -> Result<PathBuf, Fail> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn points(xyz: &[f64]) -> Vec<Point3<f64>> {
    xyz.chunks_exact(3)
        .map(|p| Point3::new(p[0], p[1], p[2]))
        .collect()
}

fn mat(m: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(m)
}

fn mat_out(m: &Matrix3<f64>) -> [f64; 9] {
    let mut a = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            a[r * 3 + c] = m[(r, c)];
        }
    }
    a
}

impl From<&SimilarityTransform> for SmSimilarity {
    fn from(t: &SimilarityTransform) -> Self {
        SmSimilarity {
            scale: t.scale,
            rotation: mat_out(&t.rotation),
            translation: t.translation.into(),
        }
    }
}

impl SmSimilarity {
    fn to_core(self) -> Result<SimilarityTransform, Fail> {
        Ok(SimilarityTransform::new(
            self.scale,
            mat(&self.rotation),
            Vector3::from(self.translation),
        )?)
    }
}

impl From<&CameraPose> for SmPose {
    fn from(p: &CameraPose) -> Self {
        SmPose {
            rotation: mat_out(&p.rotation),
            translation: p.translation.into(),
        }
    }
}

impl SmPose {
    fn to_core(self) -> Result<CameraPose, Fail> {
        Ok(CameraPose::new(
            mat(&self.rotation),
            Vector3::from(self.translation),
        )?)
    }
}

impl SmCamera {
    fn to_core(self, frame_id: u64) -> Result<CameraView, Fail> {
        let k = &self.intrinsics;
        let intrinsics = Intrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height)?;
        Ok(CameraView::new(intrinsics, self.pose.to_core()?, frame_id))
    }
}

impl From<&CameraView> for SmCamera {
    fn from(v: &CameraView) -> Self {
        let k = &v.intrinsics;
        SmCamera {
            intrinsics: SmIntrinsics {
                fx: k.fx,
                fy: k.fy,
                cx: k.cx,
                cy: k.cy,
                width: k.width,
                height: k.height,
            },
            pose: SmPose::from(&v.pose),
        }
    }
}

impl Default for SmIcpOptions {
    fn default() -> Self {
        let d = IcpOptions::default();
        SmIcpOptions {
            max_iters: d.max_iters,
            tol: d.tol,
            trim_quantile: d.trim_quantile.unwrap_or(1.0),
            with_scale: d.with_scale,
            symmetric: d.symmetric,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn sm_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Copies the last error message, NUL-terminated, into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sm_last_error_message(buf: *mut c_char, cap: usize) -> SmStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let bytes = msg.as_ref().map_or(&[0u8][..], |m| m.as_bytes_with_nul());
    if buf.is_null() {
        return SmStatus::NullPointer;
    }
    if cap < bytes.len() {
        return SmStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), bytes.len());
    SmStatus::Ok
}

/// Default ICP options.
#[no_mangle]
pub extern "C" fn sm_icp_default_options() -> SmIcpOptions {
    SmIcpOptions::default()
}

/// Builds a cloud from `n` packed xyz triples.
///
/// # Safety
/// `xyz` must hold `3n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_cloud_new(
    xyz: *const f64,
    n: usize,
    out_cloud: *mut *mut SmCloud,
) -> SmStatus {
    guard(|| {
        let dst = out(out_cloud, "out_cloud")?;
        let pts = points(slice(xyz, 3 * n, "xyz")?);
        let c = PointCloud::new(pts, WORLD_FRAME)?;
        *dst = Box::into_raw(Box::new(SmCloud(c)));
        Ok(())
    })
}

/// # Safety
/// `cloud` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sm_cloud_free(cloud: *mut SmCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_cloud_len(cloud: *const SmCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the points as packed xyz into `xyz`, which holds `cap` doubles.
///
/// # Safety
/// `cloud` must be live and `xyz` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sm_cloud_points(
    cloud: *const SmCloud,
    xyz: *mut f64,
    cap: usize,
) -> SmStatus {
    guard(|| {
        let c = self::cloud(cloud, "cloud")?;
        if cap < 3 * c.len() {
            return Err(Fail(
                SmStatus::BufferTooSmall,
                format!("need {} doubles, got {cap}", 3 * c.len()),
            ));
        }
        if c.is_empty() {
            return Ok(());
        }
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let dst = std::slice::from_raw_parts_mut(xyz, 3 * c.len());
        for (d, p) in dst.chunks_exact_mut(3).zip(c.positions()) {
            d.copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out_cloud` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_cloud_read_ply(
    path: *const c_char,
    out_cloud: *mut *mut SmCloud,
) -> SmStatus {
    guard(|| {
        let dst = out(out_cloud, "out_cloud")?;
        let c = read_ply(self::path(path)?)?;
        *dst = Box::into_raw(Box::new(SmCloud(c)));
        Ok(())
    })
}

/// # Safety
/// `cloud` must be live; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sm_cloud_write_ply(
    cloud: *const SmCloud,
    path: *const c_char,
    ascii: bool,
) -> SmStatus {
    guard(|| {
        let enc = if ascii {
            PlyEncoding::Ascii
        } else {
            PlyEncoding::BinaryLittleEndian
        };
        write_ply(self::path(path)?, self::cloud(cloud, "cloud")?, enc)?;
        Ok(())
    })
}

/// Least-squares similarity mapping `src[i]` onto `dst[i]`.
///
/// # Safety
/// `src` and `dst` must hold `3n` doubles; `out_transform` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_umeyama(
    src: *const f64,
    dst: *const f64,
    n: usize,
    with_scale: bool,
    out_transform: *mut SmSimilarity,
) -> SmStatus {
    guard(|| {
        let o = out(out_transform, "out_transform")?;
        let t = umeyama(
            &points(slice(src, 3 * n, "src")?),
            &points(slice(dst, 3 * n, "dst")?),
            with_scale,
        )?;
        *o = SmSimilarity::from(&t);
        Ok(())
    })
}

/// Lifts a row-major `width×height` z-depth map. Non-finite or
/// non-positive depths are skipped.
///
/// # Safety
/// `depth` must hold `width·height` doubles from `camera`'s intrinsics;
/// `camera` must be valid and `out_cloud` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_backproject(
    depth: *const f64,
    camera: *const SmCamera,
    out_cloud: *mut *mut SmCloud,
) -> SmStatus {
    guard(|| {
        let dst = out(out_cloud, "out_cloud")?;
        let cam = camera.as_ref().ok_or_else(|| null("camera"))?;
        let view = cam.to_core(0)?;
        let (w, h) = (view.intrinsics.width, view.intrinsics.height);
        let values = slice(depth, w as usize * h as usize, "depth")?.to_vec();
        let d = DepthMap::from_values(w, h, values)?;
        *dst = Box::into_raw(Box::new(SmCloud(backproject(&d, &view)?)));
        Ok(())
    })
}

/// ICP from `pred` onto `gt`. Null `init` starts at the identity, null
/// `options` uses the defaults.
///
/// # Safety
/// Handles must be live; pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn sm_icp(
    pred: *const SmCloud,
    gt: *const SmCloud,
    init: *const SmSimilarity,
    options: *const SmIcpOptions,
    out_result: *mut SmIcpResult,
) -> SmStatus {
    guard(|| {
        let o = out(out_result, "out_result")?;
        let init = match init.as_ref() {
            Some(t) => t.to_core()?,
            None => SimilarityTransform::identity(),
        };
        let so = options.as_ref().copied().unwrap_or_default();
        let opts = IcpOptions {
            max_iters: so.max_iters,
            tol: so.tol,
            trim_quantile: (so.trim_quantile > 0.0 && so.trim_quantile < 1.0)
                .then_some(so.trim_quantile),
            with_scale: so.with_scale,
            symmetric: so.symmetric,
        };
        let r = icp_scale_refine(cloud(pred, "pred")?, cloud(gt, "gt")?, &init, &opts)?;
        *o = SmIcpResult {
            transform: SmSimilarity::from(&r.transform),
            iterations: r.iterations,
            final_residual: r.final_residual(),
            converged: r.converged,
        };
        Ok(())
    })
}

/// Fraction of `a`'s near/far frustum volume inside `b`'s.
///
/// # Safety
/// `a`, `b` and `out_overlap` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sm_frustum_overlap(
    a: *const SmCamera,
    b: *const SmCamera,
    near: f64,
    far: f64,
    samples: usize,
    seed: u64,
    out_overlap: *mut f64,
) -> SmStatus {
    guard(|| {
        let o = out(out_overlap, "out_overlap")?;
        let fa = Frustum::new(a.as_ref().ok_or_else(|| null("a"))?.to_core(0)?, near, far)?;
        let fb = Frustum::new(b.as_ref().ok_or_else(|| null("b"))?.to_core(1)?, near, far)?;
        *o = frustum_overlap(&fa, &fb, samples, seed)?;
        Ok(())
    })
}

/// Best bank camera for each of the `floor(n_targets/4)` planned targets.
/// `out_pairs` holds `cap` entries; the planned count goes to `out_count`.
///
/// # Safety
/// Arrays must hold the stated counts; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_plan_retrieval(
    targets: *const SmCamera,
    n_targets: usize,
    bank: *const SmCamera,
    n_bank: usize,
    near: f64,
    far: f64,
    samples: usize,
    seed: u64,
    floor: f64,
    out_pairs: *mut SmRetrievalPair,
    cap: usize,
    out_count: *mut usize,
) -> SmStatus {
    guard(|| {
        let count = out(out_count, "out_count")?;
        let t: Vec<CameraView> = slice(targets, n_targets, "targets")?
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_core(i as u64))
            .collect::<Result<_, _>>()?;
        let frames: Vec<Frame> = slice(bank, n_bank, "bank")?
            .iter()
            .enumerate()
            .map(|(i, c)| Ok(Frame::new(ImageRef::none(), c.to_core(i as u64)?)))
            .collect::<Result<_, Fail>>()?;
        let mem = MemoryBank::new(1)?.insert(&frames, SourceTag::Generated)?;
        let opts = RetrievalOptions {
            near,
            far,
            samples,
            seed,
            floor,
        };
        let plan = plan_retrieval(&t, &mem, &opts)?;
        *count = plan.pairs.len();
        if cap < plan.pairs.len() {
            return Err(Fail(
                SmStatus::BufferTooSmall,
                format!("need {} pairs, got {cap}", plan.pairs.len()),
            ));
        }
        if plan.pairs.is_empty() {
            return Ok(());
        }
        if out_pairs.is_null() {
            return Err(null("out_pairs"));
        }
        let dst = std::slice::from_raw_parts_mut(out_pairs, plan.pairs.len());
        for (d, p) in dst.iter_mut().zip(&plan.pairs) {
            *d = SmRetrievalPair {
                target_index: p.target_index,
                entry: p.entry.map_or(-1, |e| e as i64),
                overlap: p.overlap,
            };
        }
        Ok(())
    })
}

/// Precision, recall and F1 of aligned clouds at `threshold`.
///
/// # Safety
/// Handles must be live and `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_pcd_f1(
    pred: *const SmCloud,
    gt: *const SmCloud,
    threshold: f64,
    out_metrics: *mut SmPcdMetrics,
) -> SmStatus {
    guard(|| {
        let o = out(out_metrics, "out_metrics")?;
        let m = pcd_f1(cloud(pred, "pred")?, cloud(gt, "gt")?, threshold)?;
        *o = SmPcdMetrics {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            threshold: m.threshold,
        };
        Ok(())
    })
}

/// Area under the precision/recall curve over ascending thresholds.
///
/// # Safety
/// `thresholds` must hold `n` doubles; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn sm_pcd_auc(
    pred: *const SmCloud,
    gt: *const SmCloud,
    thresholds: *const f64,
    n: usize,
    out_auc: *mut f64,
) -> SmStatus {
    guard(|| {
        let o = out(out_auc, "out_auc")?;
        *o = pcd_auc(
            cloud(pred, "pred")?,
            cloud(gt, "gt")?,
            slice(thresholds, n, "thresholds")?,
        )?;
        Ok(())
    })
}

/// Camera errors after similarity alignment of `pred` onto `gt`.
///
/// # Safety
/// Both arrays must hold `n` poses.
#[no_mangle]
pub unsafe extern "C" fn sm_cam_metrics(
    pred: *const SmPose,
    gt: *const SmPose,
    n: usize,
    out_metrics: *mut SmCamMetrics,
) -> SmStatus {
    guard(|| {
        let o = out(out_metrics, "out_metrics")?;
        let conv = |s: &[SmPose]| s.iter().map(|p| p.to_core()).collect::<Result<Vec<_>, _>>();
        let m = cam_metrics(&conv(slice(pred, n, "pred")?)?, &conv(slice(gt, n, "gt")?)?)?;
        *o = SmCamMetrics {
            rot_err_deg: m.rot_err_deg,
            trans_err: m.trans_err,
            ate: m.ate,
        };
        Ok(())
    })
}

/// Writes `n_frames` poses of a default trajectory of `kind` into
/// `out_poses`, which holds `cap` entries. `angle_deg <= 0` keeps the
/// default angle.
///
/// # Safety
/// `start` must be valid; `out_poses` must hold `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn sm_trajectory(
    kind: SmTrajectoryKind,
    n_frames: usize,
    start: *const SmCamera,
    median_depth: f64,
    angle_deg: f64,
    out_poses: *mut SmPose,
    cap: usize,
) -> SmStatus {
    guard(|| {
        let start = start.as_ref().ok_or_else(|| null("start"))?.to_core(0)?;
        let kind = match kind {
            SmTrajectoryKind::Up => TrajectoryKind::Up,
            SmTrajectoryKind::Left => TrajectoryKind::Left,
            SmTrajectoryKind::Right => TrajectoryKind::Right,
            SmTrajectoryKind::Orbit => TrajectoryKind::Orbit,
        };
        let mut spec = TrajectorySpec::new(kind, n_frames);
        if angle_deg > 0.0 {
            spec.angle_deg = angle_deg;
        }
        if cap < n_frames {
            return Err(Fail(
                SmStatus::BufferTooSmall,
                format!("need {n_frames} poses, got {cap}"),
            ));
        }
        let views = synthesize(&spec, &start, median_depth)?;
        if out_poses.is_null() {
            return Err(null("out_poses"));
        }
        let dst = std::slice::from_raw_parts_mut(out_poses, views.len());
        for (d, v) in dst.iter_mut().zip(&views) {
            *d = SmPose::from(&v.pose);
        }
        Ok(())
    })
}
