//! Configuration-driven entry points used by the `gestprop` binary.

pub mod commands;
pub mod config;
pub mod run;

pub use commands::{
    cmd_baselines, cmd_eval, cmd_features, cmd_gradcheck, cmd_hpsearch, cmd_predict, cmd_synth,
    cmd_train, load_dataset, record_outputs, CheckpointMeta,
};
pub use config::{CvMode, ExperimentConfig, SearchConfig};
pub use run::{
    baseline_metrics, cross_validate, make_plan, summarize, system_name, CvOutcome, PropertyResult,
};
