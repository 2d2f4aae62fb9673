use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetMeta, Episode, OfflineDataset, Transition};
use crate::algo::PolicySet;
use crate::env::{CoopNav, EnvConfig};
use crate::error::{Error, Result};
use crate::rng::{episode_seeds, stream, Stream};

/// Source of behavior actions.
#[derive(Debug, Clone, Copy)]
pub enum Behavior<'a> {
    /// `clamp(π(o) + N(0, σ²), ±1)`.
    Policy(&'a PolicySet),
    /// Uniform in the action box; the noise level is ignored.
    Uniform,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn flat(parts: &[Vec<f64>]) -> Vec<f32> {
    parts.iter().flat_map(|p| p.iter().map(|&x| x as f32)).collect()
}

pub fn generate_dataset(
    behavior: Behavior<'_>,
    env: &EnvConfig,
    n_episodes: usize,
    noise_std: f64,
    seed: u64,
    tag: &str,
) -> Result<OfflineDataset> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidSetting(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let sim = CoopNav::new(env.clone())?;
    if let Behavior::Policy(p) = behavior {
        p.check_dims(env.n_agents, env.obs_dim(), env.act_dim())?;
    }
    let normal = Normal::new(0.0, noise_std).expect("validated above");
    let mut noise = stream(seed, Stream::ActionNoise);
    let act_dim = env.act_dim();

    let mut episodes = Vec::with_capacity(n_episodes);
    for episode_seed in episode_seeds(seed, n_episodes) {
        let (mut state, mut obs) = sim.reset(episode_seed);
        let mut transitions = Vec::with_capacity(env.episode_len);
        loop {
            let actions: Vec<Vec<f64>> = match behavior {
                Behavior::Uniform => (0..env.n_agents)
                    .map(|_| (0..act_dim).map(|_| noise.random_range(-1.0..=1.0)).collect())
                    .collect(),
                Behavior::Policy(p) => {
                    let mut a = p.act(&obs)?;
                    if noise_std > 0.0 {
                        for v in a.iter_mut().flatten() {
                            *v = (*v + normal.sample(&mut noise)).clamp(-1.0, 1.0);
                        }
                    }
                    a
                }
            };
            let out = sim.step(&state, &actions)?;
            transitions.push(Transition {
                state: to_f32(&state.to_vector()),
                obs: flat(&obs),
                actions: flat(&actions),
                reward: out.reward as f32,
                next_state: to_f32(&out.state.to_vector()),
                next_obs: flat(&out.obs),
                done: out.done,
            });
            if out.done {
                break;
            }
            state = out.state;
            obs = out.obs;
        }
        episodes.push(Episode::new(transitions)?);
    }
    OfflineDataset::new(DatasetMeta::for_env(env, tag, seed), episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::NetShape;
    use crate::dataset::compute_stats;

    #[test]
    fn deterministic_for_seed() {
        let env = EnvConfig::default();
        let mut rng = stream(0, Stream::Init);
        let p = PolicySet::new(3, env.obs_dim(), 2, &NetShape::default(), &mut rng).unwrap();
        let a = generate_dataset(Behavior::Policy(&p), &env, 3, 0.0, 5, "expert").unwrap();
        let b = generate_dataset(Behavior::Policy(&p), &env, 3, 0.0, 5, "expert").unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(Behavior::Policy(&p), &env, 3, 0.1, 5, "expert").unwrap();
        let d = generate_dataset(Behavior::Policy(&p), &env, 3, 0.1, 5, "expert").unwrap();
        assert_eq!(c, d);
        assert_ne!(a, c);
    }

    #[test]
    fn counts_one_episode() {
        let env = EnvConfig::default();
        let d = generate_dataset(Behavior::Uniform, &env, 1, 0.0, 0, "random").unwrap();
        let s = compute_stats(&d);
        assert_eq!((s.episode_count, s.transition_count), (1, 25));
        assert!(d.transitions().flat_map(|t| &t.actions).all(|a| (-1.0..=1.0).contains(a)));
    }

    #[test]
    fn stats_match_independent_recount() {
        let env = EnvConfig::default();
        let d = generate_dataset(Behavior::Uniform, &env, 100, 0.0, 8, "random").unwrap();
        let s = compute_stats(&d);
        let mut returns = Vec::new();
        let mut acc = 0.0f64;
        for t in d.transitions() {
            acc += t.reward as f64;
            if t.done {
                returns.push(acc);
                acc = 0.0;
            }
        }
        let max = returns.iter().cloned().fold(f64::MIN, f64::max);
        let min = returns.iter().cloned().fold(f64::MAX, f64::min);
        let avg = returns.iter().sum::<f64>() / returns.len() as f64;
        assert_eq!(s.max_return, max);
        assert_eq!(s.min_return, min);
        assert!((s.avg_return - avg).abs() < 1e-9);
        assert_eq!(s.transition_count, 2500);
    }

    #[test]
    fn negative_noise_rejected() {
        let env = EnvConfig::default();
        assert!(generate_dataset(Behavior::Uniform, &env, 1, -1.0, 0, "random").is_err());
    }
}
