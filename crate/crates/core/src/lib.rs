//! Offline multi-agent actor-critic training with behavior cloning and
//! clipped critic targets.

pub mod algo;
mod codec;
pub mod dataset;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;

pub use algo::{
    evaluate_policy, train_offline, train_online, ClipOperator, CriticKind, MetricsLog, MixerKind, OnlineConfig, PolicySet,
    Regularizer, TrainConfig,
};
pub use dataset::{compute_stats, DatasetStats, OfflineDataset};
pub use env::{CoopNav, EnvConfig};
pub use error::{Error, FormatError, Result};
pub use harness::RunConfig;
