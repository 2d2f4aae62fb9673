use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, ForwardCache, Matrix, Mlp};

/// Hidden-layer layout shared by policies and per-agent critics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetShape {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetShape {
    fn default() -> Self {
        NetShape {
            hidden: vec![64, 64],
            activation: Activation::Relu,
        }
    }
}

impl NetShape {
    pub fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(input);
        d.extend_from_slice(&self.hidden);
        d.push(output);
        d
    }
}

/// One deterministic policy per agent, squashed by `tanh` into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    agents: Vec<Mlp>,
}

impl PolicySet {
    pub fn new<R: Rng + ?Sized>(
        n_agents: usize,
        obs_dim: usize,
        act_dim: usize,
        shape: &NetShape,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = shape.dims(obs_dim, act_dim);
        let agents = (0..n_agents)
            .map(|_| Mlp::init(&dims, shape.activation, Activation::Tanh, rng))
            .collect::<Result<_>>()?;
        Ok(PolicySet { agents })
    }

    pub fn from_agents(agents: Vec<Mlp>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::Dimension("policy set needs at least one agent".into()));
        }
        Ok(PolicySet { agents })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.agents[0].input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.agents[0].output_dim()
    }

    pub fn agents(&self) -> &[Mlp] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Mlp] {
        &mut self.agents
    }

    /// Actions for one joint observation.
    pub fn act(&self, obs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if obs.len() != self.agents.len() {
            return Err(Error::Dimension(format!(
                "{} observations for {} policies",
                obs.len(),
                self.agents.len()
            )));
        }
        self.agents
            .iter()
            .zip(obs)
            .map(|(net, o)| Ok(net.forward_one(o)?.0))
            .collect()
    }

    /// Batched forward for every agent; `obs[i]` is agent `i`'s batch.
    pub fn forward(&self, obs: &[Matrix]) -> Result<Vec<ForwardCache>> {
        self.agents.iter().zip(obs).map(|(net, o)| net.forward(o)).collect()
    }

    pub fn actions(&self, obs: &[Matrix]) -> Result<Vec<Matrix>> {
        self.agents.iter().zip(obs).map(|(net, o)| net.predict(o)).collect()
    }

    pub fn check_dims(&self, n_agents: usize, obs_dim: usize, act_dim: usize) -> Result<()> {
        if self.n_agents() != n_agents || self.obs_dim() != obs_dim || self.act_dim() != act_dim {
            return Err(Error::Dimension(format!(
                "policy set ({} agents, obs {}, act {}) does not fit ({n_agents} agents, obs {obs_dim}, act {act_dim})",
                self.n_agents(),
                self.obs_dim(),
                self.act_dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn outputs_stay_in_action_box() {
        let mut rng = stream(0, Stream::Init);
        let mut p = PolicySet::new(3, 4, 2, &NetShape::default(), &mut rng).unwrap();
        // blow up the weights so the pre-activation saturates
        for net in p.agents_mut() {
            for w in net.params_mut() {
                *w *= 100.0;
            }
        }
        let obs: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 * 5.0, -3.0, 2.0, 9.0]).collect();
        for a in p.act(&obs).unwrap() {
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn batched_matches_single() {
        let mut rng = stream(1, Stream::Init);
        let p = PolicySet::new(2, 3, 2, &NetShape::default(), &mut rng).unwrap();
        let o0 = vec![0.1, 0.2, -0.3];
        let o1 = vec![0.5, -0.5, 0.0];
        let single = p.act(&[o0.clone(), o1.clone()]).unwrap();
        let batched = p
            .actions(&[Matrix::row_vector(&o0), Matrix::row_vector(&o1)])
            .unwrap();
        assert_eq!(batched[0].row(0), single[0].as_slice());
        assert_eq!(batched[1].row(0), single[1].as_slice());
        assert!(p.check_dims(2, 3, 2).is_ok());
        assert!(p.check_dims(3, 3, 2).is_err());
    }
}
