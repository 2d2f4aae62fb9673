//! Offline datasets: episodic transitions, statistics, mixtures and sampling.

mod generate;
mod io;

pub use generate::{generate_dataset, Behavior};
pub use io::{from_bytes, load, save, to_bytes, FORMAT_VERSION, MAGIC};

use rand::Rng;

use crate::env::{EnvConfig, ENV_ID};
use crate::error::{Error, Result};

/// One joint step. Vectors are stored at 32-bit precision, which is also
/// the on-disk precision, so saving and loading is exact.
///
/// `obs`, `actions` and `next_obs` are flattened agent-major:
/// agent `i` owns `obs[i * obs_dim..(i + 1) * obs_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub obs: Vec<f32>,
    pub actions: Vec<f32>,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub next_obs: Vec<f32>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    transitions: Vec<Transition>,
    episode_return: f64,
}

impl Episode {
    /// Requires at least one transition, with `done` set on the last one only.
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        let n = transitions.len();
        if n == 0 {
            return Err(Error::InvalidSetting("episode has no transitions".into()));
        }
        for (t, tr) in transitions.iter().enumerate() {
            if tr.done != (t + 1 == n) {
                return Err(Error::InvalidSetting(format!(
                    "done flag at step {t} of a {n}-step episode must be {}",
                    t + 1 == n
                )));
            }
            if !tr.reward.is_finite() {
                return Err(Error::InvalidSetting(format!("non-finite reward at step {t}")));
            }
        }
        let episode_return = transitions.iter().map(|t| t.reward as f64).sum();
        Ok(Episode {
            transitions,
            episode_return,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Undiscounted sum of rewards.
    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub env_id: String,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub state_dim: usize,
    /// `expert`, `medium`, `medium-replay`, `random` or a `+`-joined mixture.
    pub tag: String,
    pub seed: u64,
}

impl DatasetMeta {
    pub fn for_env(env: &EnvConfig, tag: &str, seed: u64) -> Self {
        DatasetMeta {
            env_id: ENV_ID.to_string(),
            n_agents: env.n_agents,
            obs_dim: env.obs_dim(),
            act_dim: env.act_dim(),
            state_dim: env.state_dim(),
            tag: tag.to_string(),
            seed,
        }
    }

    fn same_shape(&self, other: &DatasetMeta) -> bool {
        self.env_id == other.env_id
            && self.n_agents == other.n_agents
            && self.obs_dim == other.obs_dim
            && self.act_dim == other.act_dim
            && self.state_dim == other.state_dim
    }

    fn check_transition(&self, tr: &Transition) -> Result<()> {
        let lens = [
            ("state", tr.state.len(), self.state_dim),
            ("next_state", tr.next_state.len(), self.state_dim),
            ("obs", tr.obs.len(), self.n_agents * self.obs_dim),
            ("next_obs", tr.next_obs.len(), self.n_agents * self.obs_dim),
            ("actions", tr.actions.len(), self.n_agents * self.act_dim),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::Dimension(format!(
                    "transition field `{name}` has length {got}, metadata implies {want}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    meta: DatasetMeta,
    episodes: Vec<Episode>,
    /// `offsets[e]` = number of transitions before episode `e`.
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub avg_return: f64,
    pub max_return: f64,
    pub min_return: f64,
    pub episode_count: usize,
    pub transition_count: usize,
}

impl DatasetStats {
    pub const CSV_HEADER: &'static str = "avg_return,max_return,min_return,episodes,transitions";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.avg_return,
            self.max_return,
            self.min_return,
            self.episode_count,
            self.transition_count
        )
    }
}

impl OfflineDataset {
    pub fn new(meta: DatasetMeta, episodes: Vec<Episode>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for ep in &episodes {
            for tr in ep.transitions() {
                meta.check_transition(tr)?;
            }
        }
        let mut offsets = Vec::with_capacity(episodes.len());
        let mut total = 0;
        for ep in &episodes {
            offsets.push(total);
            total += ep.len();
        }
        Ok(OfflineDataset {
            meta,
            episodes,
            offsets,
        })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn transition_count(&self) -> usize {
        self.offsets.last().unwrap() + self.episodes.last().unwrap().len()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.transitions())
    }

    /// Transition by position in episode order.
    pub fn transition(&self, index: usize) -> &Transition {
        let e = self.offsets.partition_point(|&o| o <= index) - 1;
        &self.episodes[e].transitions()[index - self.offsets[e]]
    }

    pub fn max_return(&self) -> f64 {
        self.episodes
            .iter()
            .map(Episode::episode_return)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that the dataset fits an environment configuration.
    pub fn check_env(&self, env: &EnvConfig) -> Result<()> {
        let want = DatasetMeta::for_env(env, &self.meta.tag, self.meta.seed);
        if !self.meta.same_shape(&want) {
            return Err(Error::Dimension(format!(
                "dataset ({} agents, obs {}, act {}, state {}) does not match env ({} agents, obs {}, act {}, state {})",
                self.meta.n_agents,
                self.meta.obs_dim,
                self.meta.act_dim,
                self.meta.state_dim,
                want.n_agents,
                want.obs_dim,
                want.act_dim,
                want.state_dim
            )));
        }
        Ok(())
    }
}

pub fn compute_stats(dataset: &OfflineDataset) -> DatasetStats {
    let returns: Vec<f64> = dataset.episodes.iter().map(Episode::episode_return).collect();
    let n = returns.len();
    DatasetStats {
        avg_return: returns.iter().sum::<f64>() / n as f64,
        max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
        episode_count: n,
        transition_count: dataset.transition_count(),
    }
}

/// Episode union of two datasets recorded on the same environment shape.
pub fn mix_datasets(a: &OfflineDataset, b: &OfflineDataset) -> Result<OfflineDataset> {
    if !a.meta.same_shape(&b.meta) {
        return Err(Error::Incompatible(format!(
            "cannot mix `{}` ({} agents, obs {}) with `{}` ({} agents, obs {})",
            a.meta.tag, a.meta.n_agents, a.meta.obs_dim, b.meta.tag, b.meta.n_agents, b.meta.obs_dim
        )));
    }
    let meta = DatasetMeta {
        tag: format!("{}+{}", a.meta.tag, b.meta.tag),
        ..a.meta.clone()
    };
    let episodes = a.episodes.iter().chain(&b.episodes).cloned().collect();
    OfflineDataset::new(meta, episodes)
}

/// Source of uniform indices for batch sampling.
pub trait IndexSource {
    /// Uniform draw from `0..n`.
    fn next_index(&mut self, n: usize) -> usize;
}

impl<R: Rng> IndexSource for R {
    fn next_index(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }
}

/// Uniform sampling with replacement over every transition.
pub fn sample_batch<'a, S: IndexSource + ?Sized>(
    dataset: &'a OfflineDataset,
    batch_size: usize,
    source: &mut S,
) -> Vec<&'a Transition> {
    let n = dataset.transition_count();
    (0..batch_size)
        .map(|_| dataset.transition(source.next_index(n)))
        .collect()
}

/// Splits a stream of transitions into whole episodes at `done` flags.
/// A trailing unfinished episode is dropped.
pub fn episodes_from_stream<I>(transitions: I) -> Result<Vec<Episode>>
where
    I: IntoIterator<Item = Transition>,
{
    let mut episodes = Vec::new();
    let mut current = Vec::new();
    for tr in transitions {
        let done = tr.done;
        current.push(tr);
        if done {
            episodes.push(Episode::new(std::mem::take(&mut current))?);
        }
    }
    Ok(episodes)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn meta(tag: &str) -> DatasetMeta {
        DatasetMeta {
            env_id: ENV_ID.into(),
            n_agents: 2,
            obs_dim: 3,
            act_dim: 2,
            state_dim: 4,
            tag: tag.into(),
            seed: 7,
        }
    }

    pub fn transition(reward: f32, done: bool, fill: f32) -> Transition {
        Transition {
            state: vec![fill; 4],
            obs: vec![fill; 6],
            actions: vec![fill * 0.5; 4],
            reward,
            next_state: vec![fill + 1.0; 4],
            next_obs: vec![fill + 1.0; 6],
            done,
        }
    }

    pub fn episode(rewards: &[f32]) -> Episode {
        let n = rewards.len();
        Episode::new(
            rewards
                .iter()
                .enumerate()
                .map(|(i, &r)| transition(r, i + 1 == n, i as f32))
                .collect(),
        )
        .unwrap()
    }

    pub fn dataset(tag: &str, episode_rewards: &[&[f32]]) -> OfflineDataset {
        OfflineDataset::new(meta(tag), episode_rewards.iter().map(|r| episode(r)).collect()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn stats_arithmetic() {
        let d = dataset("t", &[&[1.0, 2.0], &[5.0], &[2.0]]);
        let s = compute_stats(&d);
        assert_eq!(s.avg_return, 10.0 / 3.0);
        assert_eq!(s.max_return, 5.0);
        assert_eq!(s.min_return, 2.0);
        assert_eq!(s.episode_count, 3);
        assert_eq!(s.transition_count, 4);
        assert_eq!(s.csv_row(), format!("{},5,2,3,4", 10.0 / 3.0));
    }

    #[test]
    fn single_episode_degenerate_stats() {
        let s = compute_stats(&dataset("t", &[&[-1.5, -2.0]]));
        assert_eq!(s.avg_return, s.max_return);
        assert_eq!(s.min_return, s.max_return);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            OfflineDataset::new(meta("t"), vec![]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn episode_done_flags_validated() {
        let bad = vec![transition(0.0, true, 0.0), transition(0.0, true, 0.0)];
        assert!(Episode::new(bad).is_err());
        let unfinished = vec![transition(0.0, false, 0.0)];
        assert!(Episode::new(unfinished).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut tr = transition(0.0, true, 0.0);
        tr.obs.pop();
        let ep = Episode::new(vec![tr]).unwrap();
        assert!(matches!(
            OfflineDataset::new(meta("t"), vec![ep]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mixing_unions_episodes() {
        let a = dataset("expert", &[&[1.0], &[3.0, 1.0]]);
        let b = dataset("medium", &[&[0.5], &[7.0]]);
        let m = mix_datasets(&a, &b).unwrap();
        assert_eq!(m.episodes().len(), 4);
        assert_eq!(m.meta().tag, "expert+medium");
        assert_eq!(&m.episodes()[..2], a.episodes());
        assert_eq!(&m.episodes()[2..], b.episodes());
        assert_eq!(m.max_return(), a.max_return().max(b.max_return()));
    }

    #[test]
    fn mixing_incompatible_shapes_fails() {
        let a = dataset("a", &[&[1.0]]);
        let mut meta_b = meta("b");
        meta_b.n_agents = 3;
        meta_b.obs_dim = 2;
        let tr = Transition {
            state: vec![0.0; 4],
            obs: vec![0.0; 6],
            actions: vec![0.0; 6],
            reward: 0.0,
            next_state: vec![0.0; 4],
            next_obs: vec![0.0; 6],
            done: true,
        };
        let b = OfflineDataset::new(meta_b, vec![Episode::new(vec![tr]).unwrap()]).unwrap();
        assert!(matches!(mix_datasets(&a, &b), Err(Error::Incompatible(_))));
    }

    struct Counting(usize);

    impl IndexSource for Counting {
        fn next_index(&mut self, n: usize) -> usize {
            let i = self.0 % n;
            self.0 += 1;
            i
        }
    }

    #[test]
    fn counting_source_visits_every_transition() {
        let d = dataset("t", &[&[1.0, 2.0, 3.0], &[4.0], &[5.0, 6.0]]);
        let batch = sample_batch(&d, d.transition_count(), &mut Counting(0));
        let all: Vec<&Transition> = d.transitions().collect();
        assert_eq!(batch, all);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let d = dataset("t", &[&[1.0, 2.0, 3.0], &[4.0]]);
        let a = sample_batch(&d, 16, &mut stream(3, Stream::Batch));
        let b = sample_batch(&d, 16, &mut stream(3, Stream::Batch));
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_frequencies_are_uniform() {
        // 10 transitions, 10^6 draws: each count ~ Binomial(10^6, 0.1).
        let d = dataset("t", &[&[0.0; 4], &[0.0; 3], &[0.0; 2], &[0.0]]);
        let n = d.transition_count();
        let draws = 1_000_000usize;
        let position: std::collections::HashMap<*const Transition, usize> = d
            .transitions()
            .enumerate()
            .map(|(i, t)| (t as *const Transition, i))
            .collect();
        let mut counts = vec![0usize; n];
        for t in sample_batch(&d, draws, &mut stream(99, Stream::Batch)) {
            counts[position[&(t as *const Transition)]] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn stream_splitting_into_episodes() {
        let trs = vec![
            transition(1.0, false, 0.0),
            transition(1.0, true, 0.0),
            transition(2.0, true, 0.0),
            transition(3.0, false, 0.0),
        ];
        let eps = episodes_from_stream(trs).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].episode_return(), 2.0);
    }
}
