//! File formats: PFM and raw float32 depth, PLY clouds, camera JSON, PNG.

pub mod camera;
pub mod pfm;
pub mod ply;
pub mod png;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use camera::{parse_cameras, read_cameras, write_cameras, CameraRecord};
pub use pfm::{read_pfm, read_raw_depth, write_pfm, write_raw_depth};
pub use ply::{read_ply, write_ply, PlyEncoding};
pub use png::{read_png, write_png};

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format("JSON", format!("{}: {e}", path.display())))
}
