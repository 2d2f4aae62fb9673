use log::{info, warn};
use rand::Rng;

use super::batch::{Batch, Dims};
use super::config::{Regularizer, TrainConfig};
use super::evaluate::evaluate_policy;
use super::metrics::MetricsLog;
use super::policy::PolicySet;
use super::targets::ClipBound;
use super::train::{IntervalStats, StepOutcome, TrainState};
use crate::dataset::{sample_batch, OfflineDataset};
use crate::env::EnvConfig;
use crate::error::Result;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone)]
pub struct OfflineOutcome {
    pub policies: PolicySet,
    pub log: MetricsLog,
    /// `M ×` max dataset return; `None` when targets are not clipped.
    pub r_star: Option<f64>,
    pub divergence_threshold: f64,
    /// Non-terminal targets checked against `r + γ R*`.
    pub bound_checks: usize,
    pub bound_violations: usize,
}

/// Seed for the evaluation layouts of a run; fixed for the whole run so every
/// record scores the policy on the same episodes.
pub fn eval_seed(run_seed: u64) -> u64 {
    stream(run_seed, Stream::Evaluation).random()
}

/// `factor · max(1, |max dataset return|)`. The unscaled return keeps the
/// threshold identical across clip scales and regularizers.
pub fn divergence_threshold(dataset: &OfflineDataset, factor: f64) -> f64 {
    factor * dataset.max_return().abs().max(1.0)
}

pub fn train_offline(dataset: &OfflineDataset, env: &EnvConfig, cfg: &TrainConfig) -> Result<OfflineOutcome> {
    cfg.validate()?;
    dataset.check_env(env)?;
    let dims = Dims::from(dataset.meta());
    let mut init_rng = stream(cfg.seed, Stream::Init);
    let mut batch_rng = stream(cfg.seed, Stream::Batch);
    let mut noise_rng = stream(cfg.seed, Stream::TargetNoise);
    let mut state = TrainState::new(dims, cfg, &mut init_rng)?;

    let clip = match cfg.regularizer {
        Regularizer::Bc => None,
        Regularizer::B3c => Some(ClipBound::for_scale(dataset, cfg.clip_scale, cfg.clip_operator)?),
    };
    let r_star = clip.map(|c| c.bound).filter(|b| b.is_finite());
    match r_star {
        Some(r) if r < 0.0 => info!("R* = {r} (negative: the clip bounds targets below zero)"),
        Some(r) => info!("R* = {r}"),
        None => info!("target clipping disabled"),
    }
    let threshold = divergence_threshold(dataset, cfg.divergence_factor);
    let coeffs = cfg.coefficients();
    let eval_seed = eval_seed(cfg.seed);

    let mut log = MetricsLog::new();
    let mut interval = IntervalStats::default();
    let mut bound_checks = 0;
    let mut bound_violations = 0;
    for step in 1..=cfg.total_steps as u64 {
        let rows = sample_batch(dataset, cfg.batch_size, &mut batch_rng);
        let batch = Batch::from_transitions(&rows, dims);
        match state.train_step(&batch, cfg, clip, coeffs, threshold, &mut noise_rng)? {
            StepOutcome::Updated(s) => {
                if r_star.is_some() {
                    bound_checks += s.non_terminal;
                    bound_violations += s.bound_violations;
                }
                interval.add(&s);
            }
            StepOutcome::Diverged { target_max_abs } => {
                warn!("target values diverged at step {step}: max |y| = {target_max_abs:e} > {threshold:e}");
                let eval = evaluate_policy(&state.policies, env, cfg.eval_episodes, eval_seed)?;
                log.push(interval.record(step, eval.mean_return, Some(step)))?;
                break;
            }
        }
        if step % cfg.eval_every as u64 == 0 || step == cfg.total_steps as u64 {
            let eval = evaluate_policy(&state.policies, env, cfg.eval_episodes, eval_seed)?;
            log.push(interval.record(step, eval.mean_return, None))?;
            interval = IntervalStats::default();
        }
    }
    Ok(OfflineOutcome {
        policies: state.policies,
        log,
        r_star,
        divergence_threshold: threshold,
        bound_checks,
        bound_violations,
    })
}
