use rayon::prelude::*;

use super::policy::PolicySet;
use crate::env::{CoopNav, EnvConfig};
use crate::error::Result;
use crate::rng::episode_seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

/// Noise-free rollouts on the episode layouts drawn from `seed`.
pub fn evaluate_policy(policies: &PolicySet, env: &EnvConfig, n_episodes: usize, seed: u64) -> Result<Evaluation> {
    let sim = CoopNav::new(env.clone())?;
    policies.check_dims(env.n_agents, env.obs_dim(), env.act_dim())?;
    let returns = episode_seeds(seed, n_episodes)
        .into_par_iter()
        .map(|s| rollout(&sim, policies, s))
        .collect::<Result<Vec<f64>>>()?;
    let mean_return = if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    };
    Ok(Evaluation { mean_return, returns })
}

fn rollout(sim: &CoopNav, policies: &PolicySet, episode_seed: u64) -> Result<f64> {
    let (mut state, mut obs) = sim.reset(episode_seed);
    let mut total = 0.0;
    loop {
        let actions = policies.act(&obs)?;
        let out = sim.step(&state, &actions)?;
        total += out.reward;
        if out.done {
            return Ok(total);
        }
        state = out.state;
        obs = out.obs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::policy::NetShape;
    use crate::rng::{stream, Stream};

    #[test]
    fn deterministic_and_single_episode_mean() {
        let env = EnvConfig::default();
        let mut rng = stream(0, Stream::Init);
        let p = PolicySet::new(env.n_agents, env.obs_dim(), 2, &NetShape::default(), &mut rng).unwrap();
        let a = evaluate_policy(&p, &env, 4, 9).unwrap();
        let b = evaluate_policy(&p, &env, 4, 9).unwrap();
        assert_eq!(a, b);
        let one = evaluate_policy(&p, &env, 1, 9).unwrap();
        assert_eq!(one.mean_return, one.returns[0]);
        assert_eq!(one.returns[0], a.returns[0]);
    }

    #[test]
    fn wrong_dims_rejected() {
        let env = EnvConfig::default();
        let mut rng = stream(0, Stream::Init);
        let p = PolicySet::new(2, 3, 2, &NetShape::default(), &mut rng).unwrap();
        assert!(evaluate_policy(&p, &env, 1, 0).is_err());
    }
}
