//! Reference-view retrieval by volumetric frustum overlap.

pub mod frustum;
mod plan;

pub use frustum::{
    axial_shift_overlap, frustum_overlap, stratified_unit_samples, Frustum, DEFAULT_SAMPLES,
};
pub use plan::{
    overlaps_against, plan_retrieval, planned_indices, trajectory_overlap_score, RetrievalOptions,
    RetrievalPair, RetrievalPlan, DEFAULT_OVERLAP_FLOOR,
};
