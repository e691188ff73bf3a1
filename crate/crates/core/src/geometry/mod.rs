//! Camera models, depth maps, back-projection, Plücker rays and panoramas.

mod backproject;
pub mod camera;
pub mod panorama;
mod raster;
mod zbuffer;

pub use backproject::{
    backproject, backproject_colored, backproject_grid, plucker_rays, reproject, PluckerGrid,
    PluckerRay,
};
pub use camera::{rotation_angle_between, CameraPose, CameraView, Intrinsics};
pub use panorama::{
    default_split_angles, pano_depth_to_cloud, pano_to_perspective, pose_from_angles, ViewAngle,
    DEFAULT_PANO_FOV_H_DEG, DEFAULT_PANO_FOV_V_DEG,
};
pub use raster::{ColorImage, DepthMap};
pub use zbuffer::render_point_indices;
