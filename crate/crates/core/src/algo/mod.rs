//! Critics, mixers, update rules and training loops.

pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod critic;
pub mod evaluate;
pub mod metrics;
pub mod mixer;
pub mod offline;
pub mod online;
pub mod policy;
pub mod targets;
pub mod tiers;
pub mod train;
pub mod update;

pub use batch::{Batch, Dims};
pub use checkpoint::{load_policies, save_policies, Checkpoint};
pub use config::{OnlineConfig, Regularizer, TrainConfig};
pub use critic::{ActionValue, Critic, CriticHead, CriticKind, CriticSpec, FactoredCritic, JointCritic};
pub use evaluate::{evaluate_policy, Evaluation};
pub use metrics::{MetricsLog, MetricsRecord, METRICS_COLUMNS, METRICS_SCHEMA};
pub use mixer::{Mixer, MixerKind};
pub use offline::{train_offline, OfflineOutcome};
pub use online::{train_online, OnlineCheckpoint, OnlineOutcome, ReplayBuffer};
pub use policy::{NetShape, PolicySet};
pub use targets::{clip_target_q, compute_r_star, td_target, ClipBound, ClipOperator, Smoothing, TdTarget};
pub use tiers::{build_tiers, Tiers};
pub use train::{StepOutcome, StepStats, TrainState};
pub use update::{
    critic_loss_and_grads, critic_update, facmac_policy_update_online, policy_loss_and_grads, policy_update,
    PolicyCoefficients, PolicyLoss,
};
