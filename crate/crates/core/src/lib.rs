//! Geometry-aware memory for camera-guided video generation.
//!
//! The crate covers the non-neural machinery around a memory-augmented video
//! generator: depth back-projection and camera models, an incrementally merged
//! point-cloud cache with a 2D frame bank, frustum-overlap reference retrieval,
//! stitched target/reference attention at toy scale, camera trajectory
//! synthesis, reconstruction metrics, a small distribution-matching
//! distillation sandbox, and an end-to-end pipeline with pluggable
//! generator/reconstructor ports.

pub mod dmd;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod memory;
pub mod pipeline;
pub mod pointcloud;
pub mod retrieval;
pub mod stereo;
pub mod trajectory;

pub use error::{Error, Result};
