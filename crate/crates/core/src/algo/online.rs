//! Online training with exploration and a FIFO replay buffer. Its
//! checkpoints and buffer are the raw material for the dataset tiers.

use std::collections::VecDeque;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::batch::{Batch, Dims};
use super::config::OnlineConfig;
use super::evaluate::evaluate_policy;
use super::metrics::MetricsLog;
use super::offline::eval_seed;
use super::policy::PolicySet;
use super::train::{IntervalStats, StepOutcome, TrainState};
use super::update::PolicyCoefficients;
use crate::dataset::{episodes_from_stream, DatasetMeta, Episode, Transition};
use crate::env::{CoopNav, EnvConfig};
use crate::error::{Error, Result};
use crate::rng::{episode_seeds, stream, Stream};

/// Fixed-capacity FIFO of transitions; the oldest entry goes first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    total_inserted: u64,
    /// The oldest entry belongs to an episode whose start was evicted.
    head_partial: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            total_inserted: 0,
            head_partial: false,
        }
    }

    /// A buffer whose oldest entry, starting an episode, was inserted at
    /// `first_index`.
    pub fn from_parts(capacity: usize, first_index: u64, items: Vec<Transition>) -> Result<Self> {
        if items.len() > capacity {
            return Err(Error::InvalidSetting(format!(
                "{} transitions exceed replay capacity {capacity}",
                items.len()
            )));
        }
        Ok(ReplayBuffer {
            capacity,
            total_inserted: first_index + items.len() as u64,
            items: items.into(),
            head_partial: false,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            if let Some(old) = self.items.pop_front() {
                self.head_partial = !old.done;
            }
        }
        self.items.push_back(t);
        self.total_inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_inserted(&self) -> u64 {
        self.total_inserted
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Insertion index of the oldest retained entry.
    pub fn first_index(&self) -> u64 {
        self.total_inserted - self.items.len() as u64
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Retained entries with insertion index below `end`, oldest first.
    pub fn prefix(&self, end: u64) -> impl Iterator<Item = &Transition> {
        let keep = end.saturating_sub(self.first_index()).min(self.items.len() as u64) as usize;
        self.items.iter().take(keep)
    }

    /// Insertion index of the first retained entry that starts an episode.
    pub fn aligned_start(&self) -> u64 {
        let skip = if self.head_partial {
            self.items.iter().position(|t| t.done).map_or(self.items.len(), |i| i + 1)
        } else {
            0
        };
        self.first_index() + skip as u64
    }

    /// Complete episodes among the entries inserted before `end`.
    pub fn whole_episodes(&self, end: u64) -> Result<Vec<Episode>> {
        let skip = (self.aligned_start() - self.first_index()) as usize;
        episodes_from_stream(self.prefix(end).skip(skip).cloned())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineCheckpoint {
    pub env_step: u64,
    pub eval_return: f64,
    /// Replay insertions made before this checkpoint.
    pub inserted: u64,
    pub policies: PolicySet,
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub policies: PolicySet,
    pub buffer: ReplayBuffer,
    pub checkpoints: Vec<OnlineCheckpoint>,
    pub log: MetricsLog,
    pub meta: DatasetMeta,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn flat(parts: &[Vec<f64>]) -> Vec<f32> {
    parts.iter().flat_map(|p| p.iter().map(|&x| x as f32)).collect()
}

pub fn train_online(env: &EnvConfig, cfg: &OnlineConfig) -> Result<OnlineOutcome> {
    cfg.validate()?;
    let train = &cfg.train;
    let sim = CoopNav::new(env.clone())?;
    let meta = DatasetMeta::for_env(env, "online", train.seed);
    let dims = Dims::from(&meta);
    let mut init_rng = stream(train.seed, Stream::Init);
    let mut batch_rng = stream(train.seed, Stream::Batch);
    let mut noise_rng = stream(train.seed, Stream::TargetNoise);
    let mut explore_rng = stream(train.seed, Stream::Exploration);
    let explore = Normal::new(0.0, cfg.explore_std)
        .map_err(|e| Error::InvalidSetting(format!("explore_std: {e}")))?;
    let mut state = TrainState::new(dims, train, &mut init_rng)?;
    let threshold = train.divergence_factor * (env.episode_len as f64 * env.min_step_reward().abs()).max(1.0);
    let eval_seed = eval_seed(train.seed);

    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut checkpoints = Vec::new();
    let mut log = MetricsLog::new();
    let mut interval = IntervalStats::default();
    let mut halted = false;

    let episodes_needed = cfg.env_steps.div_ceil(env.episode_len).max(1);
    let mut layouts = episode_seeds(train.seed, episodes_needed).into_iter();
    let (mut env_state, mut obs) = sim.reset(layouts.next().unwrap_or(0));

    for env_step in 1..=cfg.env_steps as u64 {
        let actions: Vec<Vec<f64>> = if env_step <= cfg.start_steps as u64 {
            (0..env.n_agents)
                .map(|_| (0..env.act_dim()).map(|_| explore_rng.random_range(-1.0..=1.0)).collect())
                .collect()
        } else {
            let mut a = state.policies.act(&obs)?;
            for v in a.iter_mut().flatten() {
                *v = (*v + explore.sample(&mut explore_rng)).clamp(-1.0, 1.0);
            }
            a
        };
        let out = sim.step(&env_state, &actions)?;
        buffer.push(Transition {
            state: to_f32(&env_state.to_vector()),
            obs: flat(&obs),
            actions: flat(&actions),
            reward: out.reward as f32,
            next_state: to_f32(&out.state.to_vector()),
            next_obs: flat(&out.obs),
            done: out.done,
        });
        if out.done {
            (env_state, obs) = sim.reset(layouts.next().unwrap_or(env_step));
        } else {
            env_state = out.state;
            obs = out.obs;
        }

        if !halted && env_step > cfg.start_steps as u64 && buffer.len() >= train.batch_size {
            let rows = buffer.sample(train.batch_size, &mut batch_rng);
            let batch = Batch::from_transitions(&rows, dims);
            match state.train_step(&batch, train, None, PolicyCoefficients::ONLINE, threshold, &mut noise_rng)? {
                StepOutcome::Updated(s) => interval.add(&s),
                StepOutcome::Diverged { target_max_abs } => {
                    warn!("online targets diverged at env step {env_step}: max |y| = {target_max_abs:e}");
                    let eval = evaluate_policy(&state.policies, env, train.eval_episodes, eval_seed)?;
                    log.push(interval.record(env_step, eval.mean_return, Some(env_step)))?;
                    halted = true;
                }
            }
        }

        let at_eval = env_step % train.eval_every as u64 == 0;
        let at_checkpoint = env_step % cfg.checkpoint_every as u64 == 0 || env_step == cfg.env_steps as u64;
        if at_eval || at_checkpoint {
            let eval = evaluate_policy(&state.policies, env, train.eval_episodes, eval_seed)?;
            if at_eval && !halted {
                log.push(interval.record(env_step, eval.mean_return, None))?;
                interval = IntervalStats::default();
            }
            if at_checkpoint {
                checkpoints.push(OnlineCheckpoint {
                    env_step,
                    eval_return: eval.mean_return,
                    inserted: buffer.total_inserted(),
                    policies: state.policies.clone(),
                });
            }
        }
    }
    Ok(OnlineOutcome {
        policies: state.policies,
        buffer,
        checkpoints,
        log,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::config::TrainConfig;
    use crate::dataset::test_support::transition;
    use proptest::prelude::*;

    fn tiny() -> OnlineConfig {
        OnlineConfig {
            train: TrainConfig {
                batch_size: 8,
                hidden: vec![8],
                mixer_embed: 4,
                hyper_hidden: 8,
                eval_every: 50,
                eval_episodes: 2,
                ..TrainConfig::default()
            },
            env_steps: 100,
            start_steps: 20,
            explore_std: 0.1,
            buffer_capacity: 60,
            checkpoint_every: 50,
        }
    }

    #[test]
    fn zero_steps_leaves_buffer_empty() {
        let cfg = OnlineConfig {
            env_steps: 0,
            ..tiny()
        };
        let out = train_online(&EnvConfig::default(), &cfg).unwrap();
        assert!(out.buffer.is_empty());
        assert!(out.checkpoints.is_empty());
        assert!(out.log.is_empty());
    }

    #[test]
    fn small_run_checkpoints_and_caps_buffer() {
        let out = train_online(&EnvConfig::default(), &tiny()).unwrap();
        assert_eq!(out.buffer.len(), 60);
        assert_eq!(out.buffer.total_inserted(), 100);
        assert_eq!(out.checkpoints.iter().map(|c| c.env_step).collect::<Vec<_>>(), vec![50, 100]);
        assert_eq!(out.checkpoints[0].inserted, 50);
        assert_eq!(out.log.records().len(), 2);
        let again = train_online(&EnvConfig::default(), &tiny()).unwrap();
        assert_eq!(again.log, out.log);
        assert_eq!(again.policies, out.policies);
    }

    #[test]
    fn prefix_respects_insertion_order() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(transition(k as f32, false, 0.0));
        }
        let rewards: Vec<f32> = b.prefix(4).map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
        assert_eq!(b.prefix(100).count(), 3);
        assert_eq!(b.prefix(1).count(), 0);
    }

    #[test]
    fn whole_episodes_skip_evicted_head() {
        let mut b = ReplayBuffer::new(5);
        // episodes of length 3: rewards 0..3, 3..6, 6..9
        for k in 0..8 {
            b.push(transition(k as f32, k % 3 == 2, 0.0));
        }
        assert_eq!(b.first_index(), 3);
        assert_eq!(b.aligned_start(), 3);
        let eps = b.whole_episodes(100).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].episode_return(), 12.0);
        b.push(transition(8.0, true, 0.0));
        assert_eq!((b.first_index(), b.aligned_start()), (4, 6));
        let eps = b.whole_episodes(100).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].episode_return(), 21.0);
        assert!(b.whole_episodes(8).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn fifo_never_exceeds_capacity(cap in 1usize..20, n in 0usize..100) {
            let mut b = ReplayBuffer::new(cap);
            for k in 0..n {
                b.push(transition(k as f32, false, 0.0));
                prop_assert!(b.len() <= cap);
            }
            let kept: Vec<f32> = b.iter().map(|t| t.reward).collect();
            let expect: Vec<f32> = (n.saturating_sub(cap)..n).map(|k| k as f32).collect();
            prop_assert_eq!(kept, expect);
        }
    }
}
