//! Networks, targets and optimizers of one run, and the shared update step.

use rand::Rng;

use super::batch::{Batch, Dims};
use super::config::TrainConfig;
use super::critic::Critic;
use super::metrics::MetricsRecord;
use super::policy::PolicySet;
use super::targets::{td_target, ClipBound, ClipOperator};
use super::update::{critic_optimizers, critic_update, policy_optimizers, policy_update, PolicyCoefficients, PolicyLoss};
use crate::error::{Error, Result};
use crate::nn::{polyak_blend, AdamState};

#[derive(Debug, Clone)]
pub struct TrainState {
    pub policies: PolicySet,
    pub target_policies: PolicySet,
    pub critic: Critic,
    pub target_critic: Critic,
    pub policy_opt: Vec<AdamState>,
    pub critic_opt: Vec<Vec<AdamState>>,
    pub step: u64,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub critic_loss: f64,
    pub policy: Option<PolicyLoss>,
    pub target_mean: f64,
    pub target_max: f64,
    pub clip_active: usize,
    pub non_terminal: usize,
    /// Non-terminal rows with `y > r + γ R*` under a finite upper clip.
    pub bound_violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Updated(StepStats),
    /// Targets left the finite range or crossed the divergence threshold;
    /// nothing was updated.
    Diverged { target_max_abs: f64 },
}

impl TrainState {
    pub fn new<R: Rng + ?Sized>(dims: Dims, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let policies = PolicySet::new(dims.n_agents, dims.obs_dim, dims.act_dim, &cfg.net_shape(), rng)?;
        let critic = Critic::new(dims, &cfg.critic_spec(), rng)?;
        Ok(TrainState {
            policy_opt: policy_optimizers(&policies, cfg.actor_lr),
            critic_opt: critic_optimizers(&critic, cfg.critic_lr),
            target_policies: policies.clone(),
            target_critic: critic.clone(),
            policies,
            critic,
            step: 0,
        })
    }

    /// TD targets, one critic step, and every `policy_delay` steps a policy
    /// step followed by target blending.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        cfg: &TrainConfig,
        clip: Option<ClipBound>,
        coeffs: PolicyCoefficients,
        divergence_threshold: f64,
        noise_rng: &mut R,
    ) -> Result<StepOutcome> {
        let smoothing = cfg.smoothing().map(|s| (s, noise_rng));
        let truncated;
        let terminal: &[bool] = if cfg.timeout_bootstrap {
            truncated = vec![false; batch.len()];
            &truncated
        } else {
            &batch.dones
        };
        let target = td_target(
            batch,
            terminal,
            &self.target_policies,
            &self.target_critic,
            cfg.gamma,
            clip,
            smoothing,
        )?;
        let target_max_abs = target.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if target.y.iter().any(|v| !v.is_finite()) || target_max_abs > divergence_threshold {
            return Ok(StepOutcome::Diverged {
                target_max_abs: if target_max_abs.is_nan() { f64::INFINITY } else { target_max_abs },
            });
        }
        let bound_violations = match clip {
            Some(c) if c.op == ClipOperator::Min && c.bound.is_finite() => batch
                .rewards
                .iter()
                .zip(terminal)
                .zip(&target.y)
                .filter(|((&r, &d), &y)| !d && y > r + cfg.gamma * c.bound)
                .count(),
            _ => 0,
        };

        self.step += 1;
        let critic_loss = match critic_update(&mut self.critic, &mut self.critic_opt, batch, &target.y) {
            Err(Error::NonFiniteGradient { .. }) => {
                return Ok(StepOutcome::Diverged {
                    target_max_abs,
                })
            }
            other => other?,
        };
        let mut policy = None;
        if self.step % cfg.policy_delay as u64 == 0 {
            policy = match policy_update(&mut self.policies, &mut self.policy_opt, &self.critic, batch, coeffs) {
                Err(Error::NonFiniteGradient { .. }) => {
                    return Ok(StepOutcome::Diverged {
                        target_max_abs,
                    })
                }
                other => Some(other?),
            };
            self.blend_targets(cfg.tau)?;
        }
        let n = target.y.len() as f64;
        Ok(StepOutcome::Updated(StepStats {
            critic_loss,
            policy,
            target_mean: target.y.iter().sum::<f64>() / n,
            target_max: target.y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            clip_active: target.clip_active,
            non_terminal: target.non_terminal,
            bound_violations,
        }))
    }

    pub fn blend_targets(&mut self, tau: f64) -> Result<()> {
        for (t, o) in self.target_policies.agents_mut().iter_mut().zip(self.policies.agents()) {
            polyak_blend(t.params_mut(), o.params(), tau)?;
        }
        for (th, oh) in self.target_critic.heads_mut().iter_mut().zip(self.critic.heads()) {
            for (t, o) in th.nets_mut().into_iter().zip(oh.nets()) {
                polyak_blend(t.params_mut(), o.params(), tau)?;
            }
        }
        Ok(())
    }
}

/// Running summary of the steps between two metrics records.
#[derive(Debug, Clone, Default)]
pub struct IntervalStats {
    steps: usize,
    critic_loss: f64,
    policy_steps: usize,
    rl: f64,
    bc: f64,
    w: f64,
    target_sum: f64,
    target_max: f64,
    clip_active: usize,
    non_terminal: usize,
}

impl IntervalStats {
    pub fn add(&mut self, s: &StepStats) {
        if self.steps == 0 {
            self.target_max = f64::NEG_INFINITY;
        }
        self.steps += 1;
        self.critic_loss += s.critic_loss;
        self.target_sum += s.target_mean;
        self.target_max = self.target_max.max(s.target_max);
        self.clip_active += s.clip_active;
        self.non_terminal += s.non_terminal;
        if let Some(p) = s.policy {
            self.policy_steps += 1;
            self.rl += p.rl_term;
            self.bc += p.bc_term;
            self.w += p.w;
        }
    }

    pub fn record(&self, step: u64, eval_return: f64, diverged_at: Option<u64>) -> MetricsRecord {
        let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
        MetricsRecord {
            step,
            eval_return,
            critic_loss: mean(self.critic_loss, self.steps),
            policy_loss_rl: mean(self.rl, self.policy_steps),
            policy_loss_bc: mean(self.bc, self.policy_steps),
            w: mean(self.w, self.policy_steps),
            target_q_mean: mean(self.target_sum, self.steps),
            target_q_max: if self.steps == 0 { 0.0 } else { self.target_max },
            clip_active_fraction: mean(self.clip_active as f64, self.non_terminal),
            diverged_at,
        }
    }
}
