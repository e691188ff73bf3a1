//! Stitched target/reference attention at toy scale, pointmaps, and the
//! training pair sampler.

pub mod attention;
pub mod grid;
pub mod pointmap;
pub mod sampler;

pub use attention::{attend, ssm_attention, AttentionWeights};
pub use grid::{stitch, FeatureGrid, GridRole, StitchedPair};
pub use pointmap::{make_pointmap, make_pointmap_pair, PointMapImage};
pub use sampler::{
    ssm_pair_sampler, ClipPair, DropMode, SamplerOptions, SsmPairSampler, SsmSample,
};
