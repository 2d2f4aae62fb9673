//! On-disk layout of an online run.
//!
//! ```text
//! <dir>/online.b3cp            final policies plus run metadata blocks
//! <dir>/checkpoints/step_N.b3cp
//! <dir>/replay.b3cd            retained replay, whole episodes only
//! <dir>/metrics.csv
//! ```

use std::path::{Path, PathBuf};

use crate::algo::{Checkpoint, OnlineCheckpoint, OnlineOutcome, PolicySet, ReplayBuffer};
use crate::dataset::{self, DatasetMeta, OfflineDataset};
use crate::env::EnvConfig;
use crate::error::{Error, FormatError, Result};

pub const MANIFEST: &str = "online.b3cp";
pub const REPLAY: &str = "replay.b3cd";
pub const METRICS: &str = "metrics.csv";

/// An online run read back from disk.
#[derive(Debug, Clone)]
pub struct StoredOnline {
    pub policies: PolicySet,
    pub checkpoints: Vec<OnlineCheckpoint>,
    pub replay: ReplayBuffer,
}

pub fn checkpoint_path(dir: &Path, env_step: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("step_{env_step}.b3cp"))
}

pub fn save_online(dir: &Path, out: &OnlineOutcome, env: &EnvConfig) -> Result<()> {
    std::fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Checkpoint::from_policies(&out.policies);
    let cps = &out.checkpoints;
    manifest.push("checkpoint.steps", cps.iter().map(|c| c.env_step as f64).collect());
    manifest.push("checkpoint.returns", cps.iter().map(|c| c.eval_return).collect());
    manifest.push("checkpoint.inserted", cps.iter().map(|c| c.inserted as f64).collect());
    let start = out.buffer.aligned_start();
    manifest.push("replay.first_index", vec![start as f64]);
    manifest.push("replay.capacity", vec![out.buffer.capacity() as f64]);
    manifest.save(dir.join(MANIFEST))?;
    for c in cps {
        Checkpoint::from_policies(&c.policies).save(checkpoint_path(dir, c.env_step))?;
    }
    let episodes = out.buffer.whole_episodes(out.buffer.total_inserted())?;
    let replay = OfflineDataset::new(DatasetMeta::for_env(env, "replay", out.meta.seed), episodes)?;
    dataset::save(&replay, dir.join(REPLAY))?;
    out.log.save(dir.join(METRICS))
}

pub fn load_online(dir: &Path) -> Result<StoredOnline> {
    let manifest = Checkpoint::load(dir.join(MANIFEST))?;
    let block = |name: &str| {
        manifest
            .get(name)
            .ok_or_else(|| Error::Format(FormatError::Malformed(format!("{MANIFEST}: missing block `{name}`"))))
    };
    let steps = block("checkpoint.steps")?;
    let returns = block("checkpoint.returns")?;
    let inserted = block("checkpoint.inserted")?;
    if returns.len() != steps.len() || inserted.len() != steps.len() {
        return Err(FormatError::Malformed(format!("{MANIFEST}: checkpoint blocks differ in length")).into());
    }
    let mut checkpoints = Vec::with_capacity(steps.len());
    for ((&step, &ret), &ins) in steps.iter().zip(returns).zip(inserted) {
        checkpoints.push(OnlineCheckpoint {
            env_step: step as u64,
            eval_return: ret,
            inserted: ins as u64,
            policies: Checkpoint::load(checkpoint_path(dir, step as u64))?.policies()?,
        });
    }
    let first = block("replay.first_index")?.first().copied().unwrap_or(0.0) as u64;
    let capacity = block("replay.capacity")?.first().copied().unwrap_or(0.0) as usize;
    let data = dataset::load(dir.join(REPLAY))?;
    let replay = ReplayBuffer::from_parts(capacity, first, data.transitions().cloned().collect())?;
    Ok(StoredOnline {
        policies: manifest.policies()?,
        checkpoints,
        replay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{train_online, OnlineConfig, TrainConfig};

    #[test]
    fn online_run_round_trips() {
        let cfg = OnlineConfig {
            train: TrainConfig {
                batch_size: 8,
                hidden: vec![8],
                mixer_embed: 4,
                hyper_hidden: 8,
                eval_every: 50,
                eval_episodes: 2,
                ..TrainConfig::default()
            },
            env_steps: 110,
            start_steps: 20,
            buffer_capacity: 60,
            checkpoint_every: 50,
            ..OnlineConfig::default()
        };
        let env = EnvConfig::default();
        let out = train_online(&env, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_online(dir.path(), &out, &env).unwrap();
        let back = load_online(dir.path()).unwrap();
        assert_eq!(back.policies, out.policies);
        assert_eq!(back.checkpoints, out.checkpoints);
        // 110 inserts, 60 kept from index 50 (an episode start), 2 whole episodes
        assert_eq!(back.replay.first_index(), 50);
        assert_eq!(back.replay.len(), 50);
        for end in [0, 60, 75, 100, 110] {
            assert_eq!(back.replay.whole_episodes(end).unwrap(), out.buffer.whole_episodes(end).unwrap());
        }
    }
}
