//! Dataset quality tiers built from an online run.
//!
//! * expert: the final checkpoint;
//! * medium: the earliest checkpoint that closes half of the gap between the
//!   random tier's average return and the expert's evaluation return;
//! * medium-replay: the replay buffer up to the medium checkpoint;
//! * random: uniform actions.

use super::online::{OnlineCheckpoint, ReplayBuffer};
use crate::dataset::{compute_stats, generate_dataset, Behavior, DatasetMeta, OfflineDataset};
use crate::env::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Tiers {
    pub expert: OfflineDataset,
    pub medium: OfflineDataset,
    pub medium_replay: OfflineDataset,
    pub random: OfflineDataset,
    pub expert_step: u64,
    pub medium_step: u64,
}

impl Tiers {
    pub fn all(&self) -> [(&'static str, &OfflineDataset); 4] {
        [
            ("expert", &self.expert),
            ("medium", &self.medium),
            ("medium-replay", &self.medium_replay),
            ("random", &self.random),
        ]
    }
}

/// Earliest checkpoint reaching `random + 0.5 (expert − random)`.
pub fn select_medium(checkpoints: &[OnlineCheckpoint], random_return: f64) -> Option<&OnlineCheckpoint> {
    let expert = checkpoints.last()?;
    let bar = random_return + 0.5 * (expert.eval_return - random_return);
    checkpoints.iter().find(|c| c.eval_return >= bar)
}

pub fn build_tiers(
    checkpoints: &[OnlineCheckpoint],
    replay: &ReplayBuffer,
    env: &EnvConfig,
    n_episodes: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Tiers> {
    let expert_cp = checkpoints
        .last()
        .ok_or_else(|| Error::InvalidSetting("online run produced no checkpoints".into()))?;
    let random = generate_dataset(Behavior::Uniform, env, n_episodes, 0.0, seed, "random")?;
    let random_return = compute_stats(&random).avg_return;
    let medium_cp = select_medium(checkpoints, random_return).unwrap_or(expert_cp);

    let expert = generate_dataset(Behavior::Policy(&expert_cp.policies), env, n_episodes, noise_std, seed, "expert")?;
    let medium = generate_dataset(Behavior::Policy(&medium_cp.policies), env, n_episodes, noise_std, seed, "medium")?;

    let episodes = replay.whole_episodes(medium_cp.inserted)?;
    let medium_replay = OfflineDataset::new(DatasetMeta::for_env(env, "medium-replay", seed), episodes)?;

    Ok(Tiers {
        expert,
        medium,
        medium_replay,
        random,
        expert_step: expert_cp.env_step,
        medium_step: medium_cp.env_step,
    })
}
