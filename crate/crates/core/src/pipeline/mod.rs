//! End-to-end orchestration: synthetic scenes, generator and reconstructor
//! ports, configuration, and the generate → cache → retrieve → evaluate loop.

pub mod config;
pub mod ports;
mod run;
pub mod scene;

pub use config::{
    AlignMode, CameraConfig, EvalConfig, GeneratorConfig, MemoryConfig, PanoConfig, PipelineConfig,
    ReconstructorConfig, RetrievalConfig, SceneSource, TrajectoryConfig,
};
pub use ports::{
    Generation, GenerationRequest, GeneratorPort, NoiseModel, NoisyReconstructor, OracleGenerator,
    OracleReconstructor, Reconstruction, ReconstructorPort, ReplayGenerator, StartFrame,
};
pub use run::{
    run_panorama, run_pipeline, run_pipeline_with, EvalReport, GgmSummary, OrderScore, PanoReport,
    PipelineReport, RetrievalSummary, ThresholdResult, TrajectoryReport, GT_NAME, MERGED_NAME,
    REPORT_NAME, STATUS_NAME,
};
pub use scene::{Checker, Hit, Primitive, Shape, SyntheticScene, PRESETS};
