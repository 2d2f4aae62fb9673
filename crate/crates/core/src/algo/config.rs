use std::fmt;
use std::str::FromStr;

use super::critic::{CriticKind, CriticSpec};
use super::mixer::MixerKind;
use super::policy::NetShape;
use super::targets::{ClipOperator, Smoothing};
use super::update::PolicyCoefficients;
use crate::error::{Error, Result};
use crate::nn::adam::DEFAULT_LR;

/// Which regularized objective an offline run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    /// Behavior cloning plus clipped critic targets.
    #[default]
    B3c,
    /// Behavior cloning only; targets are never clipped.
    Bc,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::B3c => "b3c",
            Regularizer::Bc => "bc",
        })
    }
}

impl FromStr for Regularizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "b3c" => Ok(Regularizer::B3c),
            "bc" => Ok(Regularizer::Bc),
            other => Err(format!("unknown regularizer `{other}` (expected b3c or bc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    /// `M`; `f64::INFINITY` disables clipping.
    pub clip_scale: f64,
    pub clip_operator: ClipOperator,
    pub regularizer: Regularizer,
    pub normalize_q: bool,
    pub gamma: f64,
    /// Bootstrap through `done` rows. The simulator only ends episodes by time
    /// limit and its state carries no clock, so a `done` row is a truncation
    /// rather than a true terminal.
    pub timeout_bootstrap: bool,
    pub tau: f64,
    pub batch_size: usize,
    pub critic_kind: CriticKind,
    pub mixer: MixerKind,
    pub twin_critics: bool,
    pub policy_delay: usize,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub mixer_embed: usize,
    pub hyper_hidden: usize,
    /// Halt when any `|y|` exceeds `factor · max(1, |R*|)`.
    pub divergence_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 4.0,
            beta: 1.0,
            clip_scale: 1.0,
            clip_operator: ClipOperator::Min,
            regularizer: Regularizer::B3c,
            normalize_q: true,
            gamma: 0.99,
            timeout_bootstrap: true,
            tau: 0.005,
            batch_size: 256,
            critic_kind: CriticKind::Factored,
            mixer: MixerKind::NonMono,
            twin_critics: false,
            policy_delay: 1,
            target_noise_std: 0.0,
            target_noise_clip: 0.5,
            total_steps: 50_000,
            eval_every: 1_000,
            eval_episodes: 10,
            actor_lr: DEFAULT_LR,
            critic_lr: DEFAULT_LR,
            hidden: vec![64, 64],
            mixer_embed: 32,
            hyper_hidden: 64,
            divergence_factor: 100.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The joint-critic variant with twin critics, target smoothing and
    /// delayed policy updates.
    pub fn ma_td3() -> Self {
        TrainConfig {
            critic_kind: CriticKind::Joint,
            twin_critics: true,
            policy_delay: 2,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSetting(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.clip_scale > 0.0) {
            return bad(format!("M must be > 0 or inf, got {}", self.clip_scale));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("policy_delay", self.policy_delay),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("mixer_embed", self.mixer_embed),
            ("hyper_hidden", self.hyper_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be non-empty and positive, got {:?}", self.hidden));
        }
        if !(self.target_noise_std >= 0.0) || !(self.target_noise_clip >= 0.0) {
            return bad("target noise std and clip must be >= 0".into());
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("learning rates must be > 0".into());
        }
        if !(self.divergence_factor > 0.0) {
            return bad(format!("divergence_factor must be > 0, got {}", self.divergence_factor));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> PolicyCoefficients {
        PolicyCoefficients {
            alpha: self.alpha,
            beta: self.beta,
            normalize: self.normalize_q,
        }
    }

    pub fn net_shape(&self) -> NetShape {
        NetShape {
            hidden: self.hidden.clone(),
            ..NetShape::default()
        }
    }

    pub fn critic_spec(&self) -> CriticSpec {
        CriticSpec {
            kind: self.critic_kind,
            mixer: self.mixer,
            twin: self.twin_critics,
            shape: self.net_shape(),
            mixer_embed: self.mixer_embed,
            hyper_hidden: self.hyper_hidden,
        }
    }

    pub fn smoothing(&self) -> Option<Smoothing> {
        (self.target_noise_std > 0.0).then_some(Smoothing {
            std: self.target_noise_std,
            clip: self.target_noise_clip,
        })
    }
}

/// Settings for the online trainer that produces behavior policies. Its
/// learner defaults to the VDN mixer: the hypernetwork mixers destabilize
/// under online exploration at these scales.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    pub train: TrainConfig,
    pub env_steps: usize,
    /// Uniform-random actions before the first update.
    pub start_steps: usize,
    pub explore_std: f64,
    pub buffer_capacity: usize,
    pub checkpoint_every: usize,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            train: TrainConfig {
                eval_every: 5_000,
                mixer: MixerKind::Vdn,
                critic_lr: 1e-3,
                ..TrainConfig::default()
            },
            env_steps: 100_000,
            start_steps: 2_500,
            explore_std: 0.1,
            buffer_capacity: 100_000,
            checkpoint_every: 5_000,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.buffer_capacity == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidSetting(
                "buffer_capacity and checkpoint_every must be at least 1".into(),
            ));
        }
        if !(self.explore_std >= 0.0) {
            return Err(Error::InvalidSetting(format!(
                "explore_std must be >= 0, got {}",
                self.explore_std
            )));
        }
        Ok(())
    }
}
