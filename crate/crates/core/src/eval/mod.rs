//! Point-cloud precision/recall/F1 and AUC, and camera trajectory errors.

mod cam;
mod pcd;
mod report;

pub use cam::{align_trajectories, cam_metrics, CamMetrics};
pub use pcd::{auc_from_sweep, pcd_auc, pcd_f1, pcd_sweep, PcdDistances, PcdMetrics};
pub use report::{cam_table, markdown_table, pcd_table};
