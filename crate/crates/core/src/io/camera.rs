//! Camera JSON: `{fx, fy, cx, cy, width, height, R, t}` per view, with `R`
//! the row-major camera-to-world rotation and `t` the camera center.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, CameraView, Intrinsics};
use crate::pointcloud::row_major;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
}

impl From<&CameraView> for CameraRecord {
    fn from(v: &CameraView) -> Self {
        let k = &v.intrinsics;
        let t = v.pose.translation;
        CameraRecord {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            r: row_major(&v.pose.rotation),
            t: [t.x, t.y, t.z],
            frame_id: Some(v.frame_id),
        }
    }
}

impl CameraRecord {
    pub fn to_view(&self, default_frame_id: u64) -> Result<CameraView> {
        let k = Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        let pose = CameraPose::new(
            Matrix3::from_row_slice(&self.r),
            Vector3::from_column_slice(&self.t),
        )?;
        Ok(CameraView::new(
            k,
            pose,
            self.frame_id.unwrap_or(default_frame_id),
        ))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(CameraRecord),
    Many(Vec<CameraRecord>),
}

pub fn parse_cameras(text: &str) -> Result<Vec<CameraView>> {
    let records = match serde_json::from_str::<OneOrMany>(text)
        .map_err(|e| Error::format("camera JSON", e.to_string()))?
    {
        OneOrMany::One(r) => vec![r],
        OneOrMany::Many(v) => v,
    };
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_view(i as u64))
        .collect()
}

/// Reads a single camera object or an array of them.
pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_cameras(&text)
}

pub fn write_cameras(path: impl AsRef<Path>, views: &[CameraView]) -> Result<()> {
    let recs: Vec<CameraRecord> = views.iter().map(CameraRecord::from).collect();
    super::write_json(path, &recs)
}
