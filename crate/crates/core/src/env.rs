//! Cooperative navigation: N agents, N landmarks, one shared reward.
//!
//! Agents move with first-order dynamics inside a square arena. The team is
//! rewarded for covering every landmark and penalized for each pair of agents
//! closer than the collision radius. Each agent observes its own position, the
//! relative positions of its K nearest teammates and of every landmark.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const ENV_ID: &str = "coop-nav-v1";
pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub n_agents: usize,
    pub arena_half_width: f64,
    pub episode_len: usize,
    pub step_size: f64,
    pub collision_radius: f64,
    pub collision_penalty: f64,
    /// Number of nearest teammates each agent sees; `None` sees all of them.
    pub obs_k: Option<usize>,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            n_agents: 3,
            arena_half_width: 1.0,
            episode_len: 25,
            step_size: 0.1,
            collision_radius: 0.2,
            collision_penalty: 1.0,
            obs_k: None,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::InvalidSetting(format!(
                "n_agents must be at least 2, got {}",
                self.n_agents
            )));
        }
        if let Some(k) = self.obs_k {
            if k >= self.n_agents {
                return Err(Error::InvalidSetting(format!(
                    "obs_k must be below n_agents ({}), got {k}",
                    self.n_agents
                )));
            }
        }
        if self.episode_len == 0 {
            return Err(Error::InvalidSetting("episode_len must be at least 1".into()));
        }
        let positive = [
            ("arena_half_width", self.arena_half_width),
            ("step_size", self.step_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSetting(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("collision_radius", self.collision_radius),
            ("collision_penalty", self.collision_penalty),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSetting(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn visible_agents(&self) -> usize {
        self.obs_k.unwrap_or(self.n_agents - 1)
    }

    pub fn obs_dim(&self) -> usize {
        2 + 2 * self.visible_agents() + 2 * self.n_agents
    }

    pub fn state_dim(&self) -> usize {
        4 * self.n_agents
    }

    pub fn act_dim(&self) -> usize {
        ACTION_DIM
    }

    /// Lowest reward a single step can produce.
    pub fn min_step_reward(&self) -> f64 {
        let n = self.n_agents as f64;
        -(n * 2.0 * 2f64.sqrt() * self.arena_half_width)
            - self.collision_penalty * n * (n - 1.0) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub agent_pos: Vec<[f64; 2]>,
    pub landmark_pos: Vec<[f64; 2]>,
    pub t: usize,
}

impl EnvState {
    /// Agent positions then landmark positions, flattened.
    pub fn to_vector(&self) -> Vec<f64> {
        self.agent_pos
            .iter()
            .chain(&self.landmark_pos)
            .flat_map(|p| p.iter().copied())
            .collect()
    }

    /// Inverse of [`EnvState::to_vector`].
    pub fn from_vector(n_agents: usize, v: &[f64], t: usize) -> Result<Self> {
        if v.len() != 4 * n_agents {
            return Err(Error::Dimension(format!(
                "state vector for {n_agents} agents has length {}, expected {}",
                v.len(),
                4 * n_agents
            )));
        }
        let points: Vec<[f64; 2]> = v.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let (agents, landmarks) = points.split_at(n_agents);
        Ok(EnvState {
            agent_pos: agents.to_vec(),
            landmark_pos: landmarks.to_vec(),
            t,
        })
    }
}

/// Per-agent observation vectors.
pub type JointObservation = Vec<Vec<f64>>;
/// Per-agent action vectors.
pub type JointAction = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: EnvState,
    pub obs: JointObservation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct CoopNav {
    config: EnvConfig,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl CoopNav {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(CoopNav { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reset(&self, episode_seed: u64) -> (EnvState, JointObservation) {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
        let w = self.config.arena_half_width;
        let mut sample = |n: usize| -> Vec<[f64; 2]> {
            (0..n)
                .map(|_| [rng.random_range(-w..=w), rng.random_range(-w..=w)])
                .collect()
        };
        let agent_pos = sample(self.config.n_agents);
        let landmark_pos = sample(self.config.n_agents);
        let state = EnvState {
            agent_pos,
            landmark_pos,
            t: 0,
        };
        let obs = self.observe(&state);
        (state, obs)
    }

    pub fn step(&self, state: &EnvState, actions: &[Vec<f64>]) -> Result<StepOutcome> {
        let cfg = &self.config;
        if state.t >= cfg.episode_len {
            return Err(Error::Protocol(format!(
                "step called at t = {} on an episode of length {}",
                state.t, cfg.episode_len
            )));
        }
        if actions.len() != cfg.n_agents || actions.iter().any(|a| a.len() != ACTION_DIM) {
            return Err(Error::Dimension(format!(
                "expected {} actions of width {ACTION_DIM}",
                cfg.n_agents
            )));
        }
        let w = cfg.arena_half_width;
        let mut next = state.clone();
        for (p, a) in next.agent_pos.iter_mut().zip(actions) {
            for d in 0..2 {
                let step = cfg.step_size * a[d].clamp(-1.0, 1.0);
                p[d] = (p[d] + step).clamp(-w, w);
            }
        }
        next.t += 1;
        let reward = self.reward(&next);
        let obs = self.observe(&next);
        let done = next.t == cfg.episode_len;
        Ok(StepOutcome {
            state: next,
            obs,
            reward,
            done,
        })
    }

    /// Negative coverage distance minus the collision penalty.
    pub fn reward(&self, state: &EnvState) -> f64 {
        let coverage: f64 = state
            .landmark_pos
            .iter()
            .map(|&l| {
                state
                    .agent_pos
                    .iter()
                    .map(|&p| dist(p, l))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        let n = state.agent_pos.len();
        let mut collisions = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                if dist(state.agent_pos[i], state.agent_pos[j]) < self.config.collision_radius {
                    collisions += 1;
                }
            }
        }
        -coverage - self.config.collision_penalty * collisions as f64
    }

    pub fn observe(&self, state: &EnvState) -> JointObservation {
        let k = self.config.visible_agents();
        (0..self.config.n_agents)
            .map(|i| {
                let own = state.agent_pos[i];
                let mut others: Vec<(f64, usize)> = (0..self.config.n_agents)
                    .filter(|&j| j != i)
                    .map(|j| (dist(own, state.agent_pos[j]), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut o = Vec::with_capacity(self.config.obs_dim());
                o.extend_from_slice(&own);
                for &(_, j) in others.iter().take(k) {
                    let p = state.agent_pos[j];
                    o.extend_from_slice(&[p[0] - own[0], p[1] - own[1]]);
                }
                for l in &state.landmark_pos {
                    o.extend_from_slice(&[l[0] - own[0], l[1] - own[1]]);
                }
                o
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(cfg: EnvConfig) -> CoopNav {
        CoopNav::new(cfg).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_in_box() {
        let e = env(EnvConfig::default());
        assert_eq!(e.reset(42).0, e.reset(42).0);
        for seed in 0..1000 {
            let (s, _) = e.reset(seed);
            assert!(s.to_vector().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_layouts() {
        let e = env(EnvConfig::default());
        let mut layouts: Vec<Vec<u64>> = (0..100)
            .map(|s| {
                e.reset(s)
                    .0
                    .landmark_pos
                    .iter()
                    .flat_map(|p| p.map(f64::to_bits))
                    .collect()
            })
            .collect();
        layouts.sort();
        layouts.dedup();
        assert_eq!(layouts.len(), 100);
    }

    #[test]
    fn exact_coverage_gives_zero_reward() {
        let e = env(EnvConfig::default());
        let state = EnvState {
            agent_pos: vec![[-0.5, 0.0], [0.5, 0.0], [0.0, 0.7]],
            landmark_pos: vec![[0.0, 0.7], [-0.5, 0.0], [0.5, 0.0]],
            t: 0,
        };
        let out = e.step(&state, &vec![vec![0.0, 0.0]; 3]).unwrap();
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn coincident_agents_count_three_pairs() {
        let e = env(EnvConfig::default());
        let p = [0.1, 0.1];
        let state = EnvState {
            agent_pos: vec![p; 3],
            landmark_pos: vec![p; 3],
            t: 0,
        };
        let out = e.step(&state, &vec![vec![0.0, 0.0]; 3]).unwrap();
        assert_eq!(out.reward, -3.0);
    }

    #[test]
    fn two_agent_hand_geometry() {
        let e = env(EnvConfig {
            n_agents: 2,
            ..EnvConfig::default()
        });
        let state = EnvState {
            agent_pos: vec![[0.0, 0.0], [0.6, 0.0]],
            landmark_pos: vec![[0.3, 0.4], [0.9, -0.4]],
            t: 0,
        };
        // Actions move agent 0 by (+0.1, 0) and agent 1 by (0, -0.1),
        // the latter after clamping an oversized command.
        let out = e
            .step(&state, &[vec![1.0, 0.0], vec![0.0, -7.0]])
            .unwrap();
        let a0 = [0.1, 0.0];
        let a1 = [0.6, -0.1];
        let l0 = f64::min(
            ((0.3f64 - a0[0]).powi(2) + (0.4f64 - a0[1]).powi(2)).sqrt(),
            ((0.3f64 - a1[0]).powi(2) + (0.4f64 - a1[1]).powi(2)).sqrt(),
        );
        let l1 = f64::min(
            ((0.9f64 - a0[0]).powi(2) + (-0.4f64 - a0[1]).powi(2)).sqrt(),
            ((0.9f64 - a1[0]).powi(2) + (-0.4f64 - a1[1]).powi(2)).sqrt(),
        );
        assert!((out.reward - (-(l0 + l1))).abs() < 1e-12);
        assert!((out.state.agent_pos[1][1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn positions_stay_in_arena() {
        let e = env(EnvConfig::default());
        let state = EnvState {
            agent_pos: vec![[0.98, -0.99], [0.0, 0.0], [-1.0, 1.0]],
            landmark_pos: vec![[0.0; 2]; 3],
            t: 0,
        };
        let out = e.step(&state, &vec![vec![1.0, -1.0], vec![0.0, 0.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(out.state.agent_pos[0], [1.0, -1.0]);
        assert_eq!(out.state.agent_pos[2], [-1.0, 1.0]);
    }

    #[test]
    fn episode_ends_and_rejects_extra_steps() {
        let cfg = EnvConfig {
            episode_len: 3,
            ..EnvConfig::default()
        };
        let e = env(cfg);
        let (mut s, _) = e.reset(1);
        let zero = vec![vec![0.0, 0.0]; 3];
        let mut dones = vec![];
        for _ in 0..3 {
            let out = e.step(&s, &zero).unwrap();
            dones.push(out.done);
            s = out.state;
        }
        assert_eq!(dones, vec![false, false, true]);
        assert!(matches!(e.step(&s, &zero), Err(Error::Protocol(_))));
    }

    #[test]
    fn state_vector_round_trip() {
        let e = env(EnvConfig::default());
        let (s, _) = e.reset(9);
        let v = s.to_vector();
        assert_eq!(v.len(), 12);
        assert_eq!(EnvState::from_vector(3, &v, 0).unwrap(), s);
        let zero = EnvState {
            agent_pos: vec![[0.0; 2]; 3],
            landmark_pos: vec![[0.0; 2]; 3],
            t: 0,
        };
        assert!(zero.to_vector().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn k_nearest_sorted_with_index_ties() {
        let e = env(EnvConfig {
            n_agents: 4,
            obs_k: Some(2),
            ..EnvConfig::default()
        });
        let state = EnvState {
            agent_pos: vec![[0.0, 0.0], [0.5, 0.0], [-0.5, 0.0], [0.1, 0.0]],
            landmark_pos: vec![[0.0; 2]; 4],
            t: 0,
        };
        let obs = e.observe(&state);
        assert_eq!(obs[0].len(), e.config().obs_dim());
        // nearest to agent 0: agent 3 (0.1), then agents 1 and 2 tie at 0.5 -> 1 wins
        assert_eq!(&obs[0][2..6], &[0.1, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn full_k_equals_full_observation() {
        let full = env(EnvConfig::default());
        let partial = env(EnvConfig {
            obs_k: Some(2),
            ..EnvConfig::default()
        });
        for seed in 0..20 {
            let (s, o) = full.reset(seed);
            assert_eq!(o, partial.observe(&s));
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            EnvConfig { n_agents: 1, ..EnvConfig::default() },
            EnvConfig { obs_k: Some(3), ..EnvConfig::default() },
            EnvConfig { episode_len: 0, ..EnvConfig::default() },
        ];
        for cfg in bad {
            assert!(CoopNav::new(cfg).is_err());
        }
    }
}
