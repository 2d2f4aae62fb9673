//! Centralized critics.
//!
//! A factored head scores each agent's `(obs_i, a_i)` with its own network and
//! mixes the utilities with a [`Mixer`]. A joint head scores
//! `(state, a_1, …, a_N)` with a single network. A [`Critic`] holds one head,
//! or two for twin-critic targets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::mixer::{Mixer, MixerCache, MixerKind};
use super::policy::NetShape;
use crate::algo::batch::Dims;
use crate::error::{Error, Result};
use crate::nn::{Activation, ForwardCache, Matrix, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticKind {
    Factored,
    Joint,
}

impl fmt::Display for CriticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriticKind::Factored => "factored",
            CriticKind::Joint => "joint",
        })
    }
}

impl FromStr for CriticKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "factored" => Ok(CriticKind::Factored),
            "joint" => Ok(CriticKind::Joint),
            other => Err(format!("unknown critic kind `{other}` (expected factored or joint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticSpec {
    pub kind: CriticKind,
    pub mixer: MixerKind,
    pub twin: bool,
    pub shape: NetShape,
    pub mixer_embed: usize,
    pub hyper_hidden: usize,
}

/// Per-agent utilities mixed into `Q_jt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredCritic {
    agents: Vec<Mlp>,
    mixer: Mixer,
    obs_dim: usize,
}

/// One network over the global state and every action.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCritic {
    net: Mlp,
    state_dim: usize,
    act_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CriticHead {
    Factored(FactoredCritic),
    Joint(JointCritic),
}

#[derive(Debug, Clone)]
pub enum HeadCache {
    Factored {
        agents: Vec<ForwardCache>,
        mixer: MixerCache,
    },
    Joint(ForwardCache),
}

/// Gradients of one head: per-network parameter gradients (aligned with
/// [`CriticHead::nets`]) and per-agent action gradients.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub params: Option<Vec<Vec<f64>>>,
    pub actions: Vec<Matrix>,
}

impl FactoredCritic {
    pub fn new<R: Rng + ?Sized>(dims: Dims, spec: &CriticSpec, rng: &mut R) -> Result<Self> {
        let net_dims = spec.shape.dims(dims.obs_dim + dims.act_dim, 1);
        let agents = (0..dims.n_agents)
            .map(|_| Mlp::init(&net_dims, spec.shape.activation, Activation::Identity, rng))
            .collect::<Result<Vec<_>>>()?;
        let mixer = Mixer::new(
            spec.mixer,
            dims.n_agents,
            dims.state_dim,
            spec.mixer_embed,
            spec.hyper_hidden,
            rng,
        )?;
        Ok(FactoredCritic {
            agents,
            mixer,
            obs_dim: dims.obs_dim,
        })
    }

    pub fn from_parts(agents: Vec<Mlp>, mixer: Mixer, obs_dim: usize) -> Self {
        FactoredCritic {
            agents,
            mixer,
            obs_dim,
        }
    }

    pub fn agents(&self) -> &[Mlp] {
        &self.agents
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    /// Per-agent utilities as a `batch × n_agents` matrix.
    pub fn utilities(&self, obs: &[Matrix], actions: &[Matrix]) -> Result<(Matrix, Vec<ForwardCache>)> {
        let batch = obs[0].rows();
        let n = self.agents.len();
        let mut q = Matrix::zeros(batch, n);
        let mut caches = Vec::with_capacity(n);
        for (i, net) in self.agents.iter().enumerate() {
            let cache = net.forward(&obs[i].hcat(&actions[i]))?;
            for r in 0..batch {
                q.set(r, i, cache.output().get(r, 0));
            }
            caches.push(cache);
        }
        Ok((q, caches))
    }
}

impl JointCritic {
    pub fn new<R: Rng + ?Sized>(dims: Dims, spec: &CriticSpec, rng: &mut R) -> Result<Self> {
        let net_dims = spec
            .shape
            .dims(dims.state_dim + dims.n_agents * dims.act_dim, 1);
        Ok(JointCritic {
            net: Mlp::init(&net_dims, spec.shape.activation, Activation::Identity, rng)?,
            state_dim: dims.state_dim,
            act_dim: dims.act_dim,
        })
    }

    pub fn from_net(net: Mlp, state_dim: usize, act_dim: usize) -> Self {
        JointCritic {
            net,
            state_dim,
            act_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }
}

impl CriticHead {
    pub fn new<R: Rng + ?Sized>(dims: Dims, spec: &CriticSpec, rng: &mut R) -> Result<Self> {
        Ok(match spec.kind {
            CriticKind::Factored => CriticHead::Factored(FactoredCritic::new(dims, spec, rng)?),
            CriticKind::Joint => CriticHead::Joint(JointCritic::new(dims, spec, rng)?),
        })
    }

    /// Trainable networks in a fixed order.
    pub fn nets(&self) -> Vec<&Mlp> {
        match self {
            CriticHead::Factored(f) => f.agents.iter().chain(f.mixer.hypernet()).collect(),
            CriticHead::Joint(j) => vec![&j.net],
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        match self {
            CriticHead::Factored(f) => f.agents.iter_mut().chain(f.mixer.hypernet_mut()).collect(),
            CriticHead::Joint(j) => vec![&mut j.net],
        }
    }

    /// Names for [`CriticHead::nets`], used in diagnostics and checkpoints.
    pub fn net_names(&self) -> Vec<String> {
        match self {
            CriticHead::Factored(f) => {
                let mut names: Vec<String> = (0..f.agents.len()).map(|i| format!("q{i}")).collect();
                if f.mixer.hypernet().is_some() {
                    names.push("mixer".into());
                }
                names
            }
            CriticHead::Joint(_) => vec!["q".into()],
        }
    }

    pub fn forward(&self, states: &Matrix, obs: &[Matrix], actions: &[Matrix]) -> Result<(Vec<f64>, HeadCache)> {
        match self {
            CriticHead::Factored(f) => {
                if obs.len() != f.agents.len() || actions.len() != f.agents.len() {
                    return Err(Error::Dimension(format!(
                        "factored critic for {} agents got {} observations and {} actions",
                        f.agents.len(),
                        obs.len(),
                        actions.len()
                    )));
                }
                let (q_locals, agents) = f.utilities(obs, actions)?;
                let (q, mixer) = f.mixer.forward(states, &q_locals)?;
                Ok((q, HeadCache::Factored { agents, mixer }))
            }
            CriticHead::Joint(j) => {
                let mut parts = vec![states];
                parts.extend(actions.iter());
                let cache = j.net.forward(&Matrix::hcat_all(&parts))?;
                let q = cache.output().data().to_vec();
                Ok((q, HeadCache::Joint(cache)))
            }
        }
    }

    pub fn backward(&self, cache: &HeadCache, dq: &[f64], want_params: bool) -> Result<HeadGrads> {
        let batch = dq.len();
        match (self, cache) {
            (CriticHead::Factored(f), HeadCache::Factored { agents, mixer }) => {
                let (mixer_grads, dq_locals) = f.mixer.backward(mixer, dq, want_params)?;
                let mut params = want_params.then(Vec::new);
                let mut actions = Vec::with_capacity(f.agents.len());
                for (i, (net, c)) in f.agents.iter().zip(agents).enumerate() {
                    let g = Matrix::from_vec(batch, 1, (0..batch).map(|r| dq_locals.get(r, i)).collect());
                    let input_grad = if let Some(p) = params.as_mut() {
                        let back = net.backward(c, &g)?;
                        p.push(back.param_grads);
                        back.input_grad
                    } else {
                        net.backward_input(c, &g)?
                    };
                    actions.push(input_grad.columns(f.obs_dim, input_grad.cols() - f.obs_dim));
                }
                if let (Some(p), Some(m)) = (params.as_mut(), mixer_grads) {
                    p.push(m);
                }
                Ok(HeadGrads { params, actions })
            }
            (CriticHead::Joint(j), HeadCache::Joint(c)) => {
                let g = Matrix::from_vec(batch, 1, dq.to_vec());
                let (params, input_grad) = if want_params {
                    let back = j.net.backward(c, &g)?;
                    (Some(vec![back.param_grads]), back.input_grad)
                } else {
                    (None, j.net.backward_input(c, &g)?)
                };
                let n_agents = (input_grad.cols() - j.state_dim) / j.act_dim;
                let actions = (0..n_agents)
                    .map(|i| input_grad.columns(j.state_dim + i * j.act_dim, j.act_dim))
                    .collect();
                Ok(HeadGrads { params, actions })
            }
            _ => Err(Error::Dimension("critic cache does not belong to this head".into())),
        }
    }
}

/// Anything that scores joint actions and reports `∂Q/∂a`.
pub trait ActionValue {
    fn value(&self, states: &Matrix, obs: &[Matrix], actions: &[Matrix]) -> Result<Vec<f64>>;

    /// `Q` per row plus `Σ_r dq[r] · ∂Q_r/∂a_i` for every agent `i`.
    fn value_and_action_grad(
        &self,
        states: &Matrix,
        obs: &[Matrix],
        actions: &[Matrix],
        dq: &[f64],
    ) -> Result<(Vec<f64>, Vec<Matrix>)>;
}

impl ActionValue for CriticHead {
    fn value(&self, states: &Matrix, obs: &[Matrix], actions: &[Matrix]) -> Result<Vec<f64>> {
        Ok(self.forward(states, obs, actions)?.0)
    }

    fn value_and_action_grad(
        &self,
        states: &Matrix,
        obs: &[Matrix],
        actions: &[Matrix],
        dq: &[f64],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        let (q, cache) = self.forward(states, obs, actions)?;
        let grads = self.backward(&cache, dq, false)?;
        Ok((q, grads.actions))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    heads: Vec<CriticHead>,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(dims: Dims, spec: &CriticSpec, rng: &mut R) -> Result<Self> {
        let n = if spec.twin { 2 } else { 1 };
        let heads = (0..n).map(|_| CriticHead::new(dims, spec, rng)).collect::<Result<_>>()?;
        Ok(Critic { heads })
    }

    pub fn from_heads(heads: Vec<CriticHead>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Dimension("critic needs at least one head".into()));
        }
        Ok(Critic { heads })
    }

    pub fn heads(&self) -> &[CriticHead] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [CriticHead] {
        &mut self.heads
    }

    /// Elementwise minimum over heads (the twin-critic target).
    pub fn min_value(&self, states: &Matrix, obs: &[Matrix], actions: &[Matrix]) -> Result<Vec<f64>> {
        let mut out = self.heads[0].value(states, obs, actions)?;
        for head in &self.heads[1..] {
            for (o, q) in out.iter_mut().zip(head.value(states, obs, actions)?) {
                *o = o.min(q);
            }
        }
        Ok(out)
    }
}

/// The actor is trained against the first head.
impl ActionValue for Critic {
    fn value(&self, states: &Matrix, obs: &[Matrix], actions: &[Matrix]) -> Result<Vec<f64>> {
        self.heads[0].value(states, obs, actions)
    }

    fn value_and_action_grad(
        &self,
        states: &Matrix,
        obs: &[Matrix],
        actions: &[Matrix],
        dq: &[f64],
    ) -> Result<(Vec<f64>, Vec<Matrix>)> {
        self.heads[0].value_and_action_grad(states, obs, actions, dq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn dims() -> Dims {
        Dims {
            n_agents: 2,
            obs_dim: 4,
            act_dim: 2,
            state_dim: 6,
        }
    }

    fn spec(kind: CriticKind, mixer: MixerKind) -> CriticSpec {
        CriticSpec {
            kind,
            mixer,
            twin: false,
            shape: NetShape {
                hidden: vec![8, 8],
                activation: Activation::Tanh,
            },
            mixer_embed: 4,
            hyper_hidden: 8,
        }
    }

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn vdn_head_is_sum_of_utilities() {
        let mut rng = stream(1, Stream::Init);
        let head = FactoredCritic::new(dims(), &spec(CriticKind::Factored, MixerKind::Vdn), &mut rng).unwrap();
        let states = random(5, 6, &mut rng);
        let obs = vec![random(5, 4, &mut rng), random(5, 4, &mut rng)];
        let acts = vec![random(5, 2, &mut rng), random(5, 2, &mut rng)];
        let (q_locals, _) = head.utilities(&obs, &acts).unwrap();
        let q = CriticHead::Factored(head).value(&states, &obs, &acts).unwrap();
        for r in 0..5 {
            assert!((q[r] - q_locals.row(r).iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn action_gradients_match_finite_differences() {
        let mut rng = stream(2, Stream::Init);
        for (kind, mixer) in [
            (CriticKind::Factored, MixerKind::NonMono),
            (CriticKind::Factored, MixerKind::Mono),
            (CriticKind::Joint, MixerKind::Vdn),
        ] {
            let head = CriticHead::new(dims(), &spec(kind, mixer), &mut rng).unwrap();
            let states = random(1, 6, &mut rng);
            let obs = vec![random(1, 4, &mut rng), random(1, 4, &mut rng)];
            let acts = vec![random(1, 2, &mut rng), random(1, 2, &mut rng)];
            let (_, grads) = head.value_and_action_grad(&states, &obs, &acts, &[1.0]).unwrap();
            for i in 0..2 {
                let f = |a: &[f64]| {
                    let mut acts2 = acts.clone();
                    acts2[i] = Matrix::row_vector(a);
                    head.value(&states, &obs, &acts2).unwrap()[0]
                };
                let err = grad_check(acts[i].row(0), grads[i].row(0), f, 1e-5);
                assert!(err < 1e-5, "{kind}/{mixer} agent {i}: {err}");
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = stream(3, Stream::Init);
        for (kind, mixer) in [
            (CriticKind::Factored, MixerKind::NonMono),
            (CriticKind::Factored, MixerKind::Mono),
            (CriticKind::Joint, MixerKind::Vdn),
        ] {
            let head = CriticHead::new(dims(), &spec(kind, mixer), &mut rng).unwrap();
            let states = random(3, 6, &mut rng);
            let obs = vec![random(3, 4, &mut rng), random(3, 4, &mut rng)];
            let acts = vec![random(3, 2, &mut rng), random(3, 2, &mut rng)];
            let weights = [1.0, -0.5, 0.25];
            let (_, cache) = head.forward(&states, &obs, &acts).unwrap();
            let grads = head.backward(&cache, &weights, true).unwrap().params.unwrap();
            for (k, g) in grads.iter().enumerate() {
                let base = head.nets()[k].params().to_vec();
                let f = |p: &[f64]| {
                    let mut h = head.clone();
                    h.nets_mut()[k].set_params(p).unwrap();
                    let q = h.value(&states, &obs, &acts).unwrap();
                    q.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>()
                };
                let err = grad_check(&base, g, f, 1e-5);
                assert!(err < 1e-4, "{kind}/{mixer} net {k}: {err}");
            }
        }
    }

    #[test]
    fn twin_min_takes_lower_head() {
        let mut rng = stream(4, Stream::Init);
        let mut s = spec(CriticKind::Joint, MixerKind::Vdn);
        s.twin = true;
        let critic = Critic::new(dims(), &s, &mut rng).unwrap();
        assert_eq!(critic.heads().len(), 2);
        let states = random(4, 6, &mut rng);
        let obs = vec![random(4, 4, &mut rng), random(4, 4, &mut rng)];
        let acts = vec![random(4, 2, &mut rng), random(4, 2, &mut rng)];
        let a = critic.heads()[0].value(&states, &obs, &acts).unwrap();
        let b = critic.heads()[1].value(&states, &obs, &acts).unwrap();
        let m = critic.min_value(&states, &obs, &acts).unwrap();
        for r in 0..4 {
            assert_eq!(m[r], a[r].min(b[r]));
        }
    }

    #[test]
    fn joint_critic_input_width() {
        let mut rng = stream(5, Stream::Init);
        let j = JointCritic::new(dims(), &spec(CriticKind::Joint, MixerKind::Vdn), &mut rng).unwrap();
        assert_eq!(j.input_dim(), 6 + 2 * 2);
    }
}
