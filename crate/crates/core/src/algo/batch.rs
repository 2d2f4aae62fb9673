use crate::dataset::{DatasetMeta, Transition};
use crate::nn::Matrix;

/// Minibatch upcast to `f64` and split per agent.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Matrix,
    pub obs: Vec<Matrix>,
    pub actions: Vec<Matrix>,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub next_obs: Vec<Matrix>,
    pub dones: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub state_dim: usize,
}

impl From<&DatasetMeta> for Dims {
    fn from(m: &DatasetMeta) -> Self {
        Dims {
            n_agents: m.n_agents,
            obs_dim: m.obs_dim,
            act_dim: m.act_dim,
            state_dim: m.state_dim,
        }
    }
}

fn upcast(v: &[f32]) -> impl Iterator<Item = f64> + '_ {
    v.iter().map(|&x| x as f64)
}

fn per_agent(rows: &[&Transition], field: impl Fn(&Transition) -> &[f32], n: usize, width: usize) -> Vec<Matrix> {
    (0..n)
        .map(|i| {
            let data = rows
                .iter()
                .flat_map(|t| upcast(&field(t)[i * width..(i + 1) * width]))
                .collect();
            Matrix::from_vec(rows.len(), width, data)
        })
        .collect()
}

impl Batch {
    pub fn from_transitions(rows: &[&Transition], dims: Dims) -> Self {
        let b = rows.len();
        let states = Matrix::from_vec(b, dims.state_dim, rows.iter().flat_map(|t| upcast(&t.state)).collect());
        let next_states = Matrix::from_vec(
            b,
            dims.state_dim,
            rows.iter().flat_map(|t| upcast(&t.next_state)).collect(),
        );
        Batch {
            states,
            obs: per_agent(rows, |t| &t.obs, dims.n_agents, dims.obs_dim),
            actions: per_agent(rows, |t| &t.actions, dims.n_agents, dims.act_dim),
            rewards: rows.iter().map(|t| t.reward as f64).collect(),
            next_states,
            next_obs: per_agent(rows, |t| &t.next_obs, dims.n_agents, dims.obs_dim),
            dones: rows.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}
