//! Configuration, experiment drivers and report tables.

pub mod commands;
pub mod config;
pub mod report;
pub mod store;

pub use commands::{
    diagnose_cmd, evaluate_cmd, gen_dataset_cmd, load_config, out_root, stats_cmd, sweep_cmd, train_offline_cmd,
    train_online_cmd, GeneratedTier, RunSummary, SweepOutcome, TierKind, CONFIG_ECHO, OUT_DIR_ENV,
};
pub use config::{DatasetSettings, RunConfig, RunSettings, SweepSettings};
pub use report::{diagnose, Diagnosis, RunLog, SweepCell, VariantSummary};
