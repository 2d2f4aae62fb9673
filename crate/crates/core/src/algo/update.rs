//! One gradient step for critics and policies.

use log::warn;

use super::batch::Batch;
use super::critic::{ActionValue, Critic, CriticHead};
use super::policy::PolicySet;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Matrix};

/// Floor on the normalizer's denominator.
pub const NORM_EPSILON: f64 = 1e-8;

/// Mean squared TD error of one head and its parameter gradients (one vector
/// per network, aligned with [`CriticHead::nets`]).
pub fn critic_loss_and_grads(head: &CriticHead, batch: &Batch, y: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    let (q, cache) = head.forward(&batch.states, &batch.obs, &batch.actions)?;
    let n = q.len() as f64;
    let mut loss = 0.0;
    let dq: Vec<f64> = q
        .iter()
        .zip(y)
        .map(|(q, y)| {
            let e = q - y;
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    let grads = head.backward(&cache, &dq, true)?.params.expect("requested");
    Ok((loss / n, grads))
}

/// Optimizer states for every network of every head.
pub fn critic_optimizers(critic: &Critic, lr: f64) -> Vec<Vec<AdamState>> {
    critic
        .heads()
        .iter()
        .map(|h| h.nets().iter().map(|n| AdamState::new(n.param_count(), lr)).collect())
        .collect()
}

pub fn policy_optimizers(policies: &PolicySet, lr: f64) -> Vec<AdamState> {
    policies
        .agents()
        .iter()
        .map(|n| AdamState::new(n.param_count(), lr))
        .collect()
}

/// One Adam step on every head against the fixed targets `y`. Returns the
/// mean loss over heads, measured before the step.
pub fn critic_update(critic: &mut Critic, optims: &mut [Vec<AdamState>], batch: &Batch, y: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let n_heads = critic.heads().len();
    for (h, (head, opts)) in critic.heads_mut().iter_mut().zip(optims).enumerate() {
        let (loss, grads) = critic_loss_and_grads(head, batch, y)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteGradient {
                block: format!("critic{h}"),
                index: 0,
            });
        }
        let names = head.net_names();
        for ((net, opt), (g, name)) in head.nets_mut().into_iter().zip(opts).zip(grads.iter().zip(&names)) {
            opt.step(net.params_mut(), g, &format!("critic{h}.{name}"))?;
        }
        total += loss;
    }
    Ok(total / n_heads as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyCoefficients {
    pub alpha: f64,
    pub beta: f64,
    /// Divide `α` by the batch mean of `|Q_jt(s, a_dataset)|`.
    pub normalize: bool,
}

impl PolicyCoefficients {
    /// Plain deterministic policy gradient: `w = 1`, no behavior cloning.
    pub const ONLINE: PolicyCoefficients = PolicyCoefficients {
        alpha: 1.0,
        beta: 0.0,
        normalize: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolicyLoss {
    /// `−w · mean Q_jt(s, π(τ))`.
    pub rl_term: f64,
    /// `β · mean Σ_i ‖π^i(τ^i) − a^i‖²`.
    pub bc_term: f64,
    pub w: f64,
}

impl PolicyLoss {
    pub fn total(&self) -> f64 {
        self.rl_term + self.bc_term
    }
}

/// `w` for a batch: `α / mean |Q_jt(s, τ, a_dataset)|`, or `α` when
/// normalization is off.
pub fn q_weight<C: ActionValue + ?Sized>(critic: &C, batch: &Batch, coeffs: PolicyCoefficients) -> Result<f64> {
    if !coeffs.normalize || coeffs.alpha == 0.0 {
        return Ok(coeffs.alpha);
    }
    let q = critic.value(&batch.states, &batch.obs, &batch.actions)?;
    let mean_abs = q.iter().map(|v| v.abs()).sum::<f64>() / q.len() as f64;
    if mean_abs < NORM_EPSILON {
        warn!("batch mean |Q| is {mean_abs:e}; normalizing with {NORM_EPSILON:e}");
    }
    Ok(coeffs.alpha / mean_abs.max(NORM_EPSILON))
}

/// Policy loss and per-agent parameter gradients. The critic is only read.
pub fn policy_loss_and_grads<C: ActionValue + ?Sized>(
    policies: &PolicySet,
    critic: &C,
    batch: &Batch,
    coeffs: PolicyCoefficients,
) -> Result<(PolicyLoss, Vec<Vec<f64>>)> {
    let caches = policies.forward(&batch.obs)?;
    let actions: Vec<Matrix> = caches.iter().map(|c| c.output().clone()).collect();
    let b = batch.len();
    let n = b as f64;
    let w = q_weight(critic, batch, coeffs)?;

    let mut grads: Vec<Matrix> = actions.iter().map(|a| Matrix::zeros(a.rows(), a.cols())).collect();
    let mut loss = PolicyLoss {
        w,
        ..PolicyLoss::default()
    };
    if w != 0.0 {
        let dq = vec![-w / n; b];
        let (q, dq_da) = critic.value_and_action_grad(&batch.states, &batch.obs, &actions, &dq)?;
        loss.rl_term = -w * q.iter().sum::<f64>() / n;
        for (g, d) in grads.iter_mut().zip(&dq_da) {
            g.data_mut().copy_from_slice(d.data());
        }
    }
    if coeffs.beta != 0.0 {
        let mut sq = 0.0;
        for ((g, pi), a) in grads.iter_mut().zip(&actions).zip(&batch.actions) {
            for ((g, &p), &a) in g.data_mut().iter_mut().zip(pi.data()).zip(a.data()) {
                let d = p - a;
                sq += d * d;
                *g += 2.0 * coeffs.beta * d / n;
            }
        }
        loss.bc_term = coeffs.beta * sq / n;
    }

    let param_grads = policies
        .agents()
        .iter()
        .zip(&caches)
        .zip(&grads)
        .map(|((net, cache), g)| Ok(net.backward(cache, g)?.param_grads))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, param_grads))
}

/// One Adam step on every policy. The critic stays frozen.
pub fn policy_update<C: ActionValue + ?Sized>(
    policies: &mut PolicySet,
    optims: &mut [AdamState],
    critic: &C,
    batch: &Batch,
    coeffs: PolicyCoefficients,
) -> Result<PolicyLoss> {
    let (loss, grads) = policy_loss_and_grads(policies, critic, batch, coeffs)?;
    for (i, ((net, opt), g)) in policies.agents_mut().iter_mut().zip(optims).zip(&grads).enumerate() {
        opt.step(net.params_mut(), g, &format!("policy{i}"))?;
    }
    Ok(loss)
}

/// Deterministic policy gradient step used by the online trainer.
pub fn facmac_policy_update_online<C: ActionValue + ?Sized>(
    policies: &mut PolicySet,
    optims: &mut [AdamState],
    critic: &C,
    batch: &Batch,
) -> Result<PolicyLoss> {
    policy_update(policies, optims, critic, batch, PolicyCoefficients::ONLINE)
}
