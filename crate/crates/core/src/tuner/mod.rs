//! Threshold tuning: frame features, the scripted expert, a behavior-cloned
//! MLP policy with its evaluation, and a fixed-step rule controller.

mod dataset;
mod eval;
mod expert;
mod features;
mod policy;
mod rule;
mod train;

pub use dataset::{build_demo_dataset, load_demonstrations, save_demonstrations, Annotator, Demonstration};
pub use eval::{
    convergence_map, tracker_success_experiment, ExpertPolicy, LearnedPolicy, TrackerExperiment, TrackerRun,
    TuningPolicy, TL_VALID,
};
pub use expert::{scripted_expert, scripted_expert_with, ExpertTarget, OptimalRange, DEFAULT_MAX_STEP};
pub use features::{
    extract_features, extract_features_with, extractor, feature_dim, normalize_counts, normalize_frame, FeatureConfig,
    FeatureVector, PooledStats, TileExtractor, POOLED_STATS,
};
pub use policy::{Gradient, PolicyModel, MODEL_MAGIC};
pub use rule::{measure, rule_controller_step, run_rule_controller, ControllerStep, ControllerTrace, RuleConfig};
pub use train::{train_bc, TrainConfig, TrainHistory};
