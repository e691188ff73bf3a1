//! Camera trajectory synthesis (up/left/right/orbit) and order ranking.

pub mod order;
pub mod synth;

pub use order::{
    all_orders, default_order, generated_frame_id, rank_orders, score_trajectories, ScoredOrder,
    TrajectoryOrder,
};
pub use synth::{
    rotation_axis, rotation_center, synthesize, TrajectoryKind, TrajectorySpec,
    DEFAULT_CENTER_DEPTH_RULE, DEFAULT_FRAMES, DEFAULT_LEFT_DEG, DEFAULT_ORBIT_DEG,
    DEFAULT_ORBIT_RADIUS_RULE, DEFAULT_RIGHT_DEG, DEFAULT_UP_DEG,
};
