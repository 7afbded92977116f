//! Desk-scale end-to-end runs: synthetic scenes, the fusion pass, head
//! training, reports and the ray benchmark.

mod bench;
mod config;
mod model;
mod report;
mod run;
mod scene;
mod train;

pub use bench::{bench_rays, bench_setup, linear_fit, BenchReport, BenchRow};
pub use config::{
    AugmentConfig, CameraConfig, Config, FeatureSource, GridConfig, SamplerConfig, SamplerMode, SceneConfig,
    TrainConfig,
};
pub use model::Model;
pub use report::{RunReport, StageTiming};
pub use run::{
    cast_rays, prepare_frame, ray_scores, ray_targets, run_fusion_pass, sample_pixels, sampler_scores, Frame,
};
pub use scene::{box_to_cells, gen_scene, FeatureEncoder, Scene, SceneSpec};
pub use train::{
    build_train_frame, build_train_set, grad_check_vff, score_split, train_heads, vff_loss_node, TrainFrame,
    TrainReport,
};
