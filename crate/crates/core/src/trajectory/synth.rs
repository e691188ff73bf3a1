use std::f64::consts::PI;

use nalgebra::{Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraView;

pub const DEFAULT_UP_DEG: f64 = 45.0;
pub const DEFAULT_LEFT_DEG: f64 = 90.0;
pub const DEFAULT_RIGHT_DEG: f64 = 90.0;
pub const DEFAULT_ORBIT_DEG: f64 = 360.0;
/// Pivot distance as a multiple of the median scene depth.
pub const DEFAULT_CENTER_DEPTH_RULE: f64 = 1.0;
/// Orbit radius as a multiple of the median scene depth.
pub const DEFAULT_ORBIT_RADIUS_RULE: f64 = 0.3;
pub const DEFAULT_FRAMES: usize = 81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Up,
    Left,
    Right,
    Orbit,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 4] = [
        TrajectoryKind::Orbit,
        TrajectoryKind::Up,
        TrajectoryKind::Right,
        TrajectoryKind::Left,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Up => "up",
            TrajectoryKind::Left => "left",
            TrajectoryKind::Right => "right",
            TrajectoryKind::Orbit => "orbit",
        }
    }

    pub fn default_angle_deg(self) -> f64 {
        match self {
            TrajectoryKind::Up => DEFAULT_UP_DEG,
            TrajectoryKind::Left => DEFAULT_LEFT_DEG,
            TrajectoryKind::Right => DEFAULT_RIGHT_DEG,
            TrajectoryKind::Orbit => DEFAULT_ORBIT_DEG,
        }
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(TrajectoryKind::Up),
            "left" => Ok(TrajectoryKind::Left),
            "right" => Ok(TrajectoryKind::Right),
            "orbit" => Ok(TrajectoryKind::Orbit),
            other => Err(Error::invalid(format!("unknown trajectory kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub angle_deg: f64,
    pub center_depth_rule: f64,
    pub radius_rule: f64,
    pub n_frames: usize,
    /// Multiplies the angle; below 1 for face-forward scenes.
    pub angle_scale: f64,
}

impl TrajectorySpec {
    pub fn new(kind: TrajectoryKind, n_frames: usize) -> Self {
        TrajectorySpec {
            kind,
            angle_deg: kind.default_angle_deg(),
            center_depth_rule: DEFAULT_CENTER_DEPTH_RULE,
            radius_rule: DEFAULT_ORBIT_RADIUS_RULE,
            n_frames,
            angle_scale: 1.0,
        }
    }

    pub fn effective_angle_deg(&self) -> f64 {
        self.angle_deg * self.angle_scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(Error::invalid(format!(
                "trajectory needs at least 2 frames, got {}",
                self.n_frames
            )));
        }
        let a = self.effective_angle_deg();
        if !(a > 0.0 && a <= 360.0) {
            return Err(Error::invalid(format!(
                "trajectory angle {a}° outside (0°, 360°]"
            )));
        }
        if !(self.center_depth_rule > 0.0) || !(self.radius_rule > 0.0) {
            return Err(Error::invalid("center and radius rules must be positive"));
        }
        Ok(())
    }

    /// Per-frame angle step in radians. A full turn does not repeat its
    /// first pose.
    pub fn step_rad(&self) -> f64 {
        let a = self.effective_angle_deg().to_radians();
        if a >= 2.0 * PI - 1e-12 {
            a / self.n_frames as f64
        } else {
            a / (self.n_frames - 1) as f64
        }
    }
}

/// Rotation center: `center_depth_rule · median_depth` along the start axis.
pub fn rotation_center(
    spec: &TrajectorySpec,
    start: &CameraView,
    median_depth: f64,
) -> Point3<f64> {
    start.pose.center() + start.pose.forward() * (spec.center_depth_rule * median_depth)
}

/// Rotation axis in world coordinates. Each pose is the start pose turned
/// rigidly about this axis through the rotation center, so the center
/// stays on the optical axis.
///
/// Left/right turn about the camera's vertical axis and up about its
/// horizontal axis. The orbit axis passes through the center, tilted from
/// the view axis toward camera `+x` so the start camera sweeps a circle of
/// radius `radius_rule · median_depth`.
pub fn rotation_axis(
    spec: &TrajectorySpec,
    start: &CameraView,
    median_depth: f64,
) -> Result<Unit<Vector3<f64>>> {
    let r = &start.pose.rotation;
    let (x, y, z) = (
        r.column(0).into_owned(),
        r.column(1).into_owned(),
        r.column(2).into_owned(),
    );
    Ok(match spec.kind {
        // rotating about +y swings the camera toward its -x side
        TrajectoryKind::Left => Unit::new_normalize(y),
        TrajectoryKind::Right => Unit::new_normalize(-y),
        // rotating about -x swings the camera toward -y, which is up
        TrajectoryKind::Up => Unit::new_normalize(-x),
        TrajectoryKind::Orbit => {
            let d = spec.center_depth_rule * median_depth;
            let sin_a = spec.radius_rule * median_depth / d;
            if sin_a >= 1.0 {
                return Err(Error::invalid(format!(
                    "orbit radius {} not smaller than the pivot distance {d}",
                    spec.radius_rule * median_depth
                )));
            }
            let cos_a = (1.0 - sin_a * sin_a).sqrt();
            Unit::new_normalize(-z * cos_a + x * sin_a)
        }
    })
}

/// Poses along the trajectory; the first equals `start`. Frame ids count
/// up from `start.frame_id`.
pub fn synthesize(
    spec: &TrajectorySpec,
    start: &CameraView,
    median_depth: f64,
) -> Result<Vec<CameraView>> {
    spec.validate()?;
    if !(median_depth > 0.0 && median_depth.is_finite()) {
        return Err(Error::invalid(format!(
            "median depth must be positive, got {median_depth}"
        )));
    }
    let center = rotation_center(spec, start, median_depth);
    let axis = rotation_axis(spec, start, median_depth)?;
    let step = spec.step_rad();
    Ok((0..spec.n_frames)
        .map(|i| {
            let pose = if i == 0 {
                start.pose
            } else {
                start.pose.rotated_about(&center, &axis, step * i as f64)
            };
            CameraView::new(start.intrinsics, pose, start.frame_id + i as u64)
        })
        .collect())
}
