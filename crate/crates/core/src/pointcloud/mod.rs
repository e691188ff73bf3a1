//! Point-cloud storage, nearest-neighbor search, similarity alignment and merging.

mod cloud;
pub mod icp;
pub mod nn;
mod transform;
pub mod umeyama;
pub mod voxel;

pub use cloud::{PointCloud, WORLD_FRAME};
pub use icp::{align_by_anchor, align_by_anchor_nn, icp_scale_refine, IcpOptions, IcpResult};
pub use nn::{squared_distance, Neighbor, NnIndex};
pub(crate) use transform::row_major;
pub use transform::{SimilarityTransform, TransformRecord};
pub use umeyama::{residual_sum_sq, umeyama};
pub use voxel::{default_voxel_size, merge, occupied_voxels, voxel_downsample, voxel_key};
