//! Fixtures shared by the benchmarks.

use b3c_core::algo::{Batch, Dims, TrainConfig, TrainState};
use b3c_core::dataset::{generate_dataset, sample_batch, Behavior, OfflineDataset};
use b3c_core::env::EnvConfig;
use b3c_core::rng::{stream, Stream};

/// Uniform-action episodes on the default three-agent task.
pub fn random_dataset(episodes: usize) -> OfflineDataset {
    generate_dataset(Behavior::Uniform, &EnvConfig::default(), episodes, 0.0, 0, "random")
        .expect("default env is valid")
}

pub fn batch(data: &OfflineDataset, size: usize, seed: u64) -> Batch {
    let mut rng = stream(seed, Stream::Batch);
    let rows = sample_batch(data, size, &mut rng);
    Batch::from_transitions(&rows, Dims::from(data.meta()))
}

pub fn train_state(data: &OfflineDataset, cfg: &TrainConfig) -> TrainState {
    let mut rng = stream(cfg.seed, Stream::Init);
    TrainState::new(Dims::from(data.meta()), cfg, &mut rng).expect("valid config")
}
