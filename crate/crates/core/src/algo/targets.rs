use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::batch::Batch;
use super::critic::Critic;
use super::policy::PolicySet;
use crate::dataset::OfflineDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// How the bootstrap value is compared against `R*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipOperator {
    /// Upper clip: `min(q, R*)`.
    #[default]
    Min,
    /// Literal `max(q, R*)`, kept for comparison runs.
    Max,
}

impl fmt::Display for ClipOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipOperator::Min => "min",
            ClipOperator::Max => "max",
        })
    }
}

impl FromStr for ClipOperator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "min" => Ok(ClipOperator::Min),
            "max" => Ok(ClipOperator::Max),
            other => Err(format!("unknown clip operator `{other}` (expected min or max)")),
        }
    }
}

/// `M ×` the best undiscounted episode return in the dataset.
pub fn compute_r_star(dataset: &OfflineDataset, m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidSetting(format!(
            "clip scale M must be finite and positive to form R*, got {m}"
        )));
    }
    Ok(m * dataset.max_return())
}

#[inline]
fn clip_one(q: f64, r_star: f64, op: ClipOperator) -> f64 {
    match op {
        ClipOperator::Min => q.min(r_star),
        ClipOperator::Max => q.max(r_star),
    }
}

pub fn clip_target_q(q: &[f64], r_star: f64, op: ClipOperator) -> Vec<f64> {
    q.iter().map(|&v| clip_one(v, r_star, op)).collect()
}

/// Clipping applied to bootstrap values. `bound = ±∞` leaves every value
/// unchanged but still runs the clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipBound {
    pub bound: f64,
    pub op: ClipOperator,
}

impl ClipBound {
    /// Bound for clip scale `m`; infinite `m` yields a bound the operator can
    /// never hit.
    pub fn for_scale(dataset: &OfflineDataset, m: f64, op: ClipOperator) -> Result<Self> {
        let bound = if m == f64::INFINITY {
            match op {
                ClipOperator::Min => f64::INFINITY,
                ClipOperator::Max => f64::NEG_INFINITY,
            }
        } else {
            compute_r_star(dataset, m)?
        };
        Ok(ClipBound { bound, op })
    }
}

/// Target-policy smoothing: clipped Gaussian noise on target actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub std: f64,
    pub clip: f64,
}

#[derive(Debug, Clone)]
pub struct TdTarget {
    pub y: Vec<f64>,
    /// Bootstrap values before clipping (twin minimum already taken).
    pub q_next: Vec<f64>,
    pub clip_active: usize,
    pub non_terminal: usize,
}

/// `y = r + γ (1 − terminal) clip(Q⁻(s′, π⁻(τ′)))`. Terminal rows never touch
/// the bootstrap value. `terminal` is `batch.dones`, or all `false` when done rows
/// are time-limit truncations.
pub fn td_target<R: Rng + ?Sized>(
    batch: &Batch,
    terminal: &[bool],
    target_policies: &PolicySet,
    target_critic: &Critic,
    gamma: f64,
    clip: Option<ClipBound>,
    smoothing: Option<(Smoothing, &mut R)>,
) -> Result<TdTarget> {
    let mut next_actions = target_policies.actions(&batch.next_obs)?;
    if let Some((s, rng)) = smoothing {
        add_smoothing_noise(&mut next_actions, s, rng)?;
    }
    let q_next = target_critic.min_value(&batch.next_states, &batch.next_obs, &next_actions)?;
    Ok(assemble_target(&batch.rewards, terminal, &q_next, gamma, clip))
}

fn add_smoothing_noise<R: Rng + ?Sized>(actions: &mut [Matrix], s: Smoothing, rng: &mut R) -> Result<()> {
    if s.std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, s.std).map_err(|e| Error::InvalidSetting(format!("target noise: {e}")))?;
    for m in actions {
        m.map_inplace(|a| (a + normal.sample(rng).clamp(-s.clip, s.clip)).clamp(-1.0, 1.0));
    }
    Ok(())
}

/// Combines rewards and bootstrap values into targets.
pub fn assemble_target(
    rewards: &[f64],
    dones: &[bool],
    q_next: &[f64],
    gamma: f64,
    clip: Option<ClipBound>,
) -> TdTarget {
    let mut y = Vec::with_capacity(rewards.len());
    let mut clip_active = 0;
    let mut non_terminal = 0;
    for ((&r, &done), &q) in rewards.iter().zip(dones).zip(q_next) {
        if done {
            y.push(r);
            continue;
        }
        non_terminal += 1;
        let v = match clip {
            Some(c) => {
                let v = clip_one(q, c.bound, c.op);
                if v != q {
                    clip_active += 1;
                }
                v
            }
            None => q,
        };
        y.push(r + gamma * v);
    }
    TdTarget {
        y,
        q_next: q_next.to_vec(),
        clip_active,
        non_terminal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::dataset;
    use proptest::prelude::*;

    #[test]
    fn r_star_is_scaled_max_return() {
        let d = dataset("x", &[&[3.0], &[2.0, 3.0], &[2.0]]);
        assert_eq!(compute_r_star(&d, 1.0).unwrap(), 5.0);
        let neg = dataset("x", &[&[-30.0], &[-12.0], &[-50.0]]);
        assert_eq!(compute_r_star(&neg, 1.0).unwrap(), -12.0);
        assert_eq!(compute_r_star(&neg, 0.25).unwrap(), -3.0);
        assert!(compute_r_star(&d, 0.0).is_err());
        assert!(compute_r_star(&d, f64::INFINITY).is_err());
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_target_q(&[10.0, 3.0, 5.0], 5.0, ClipOperator::Min), vec![5.0, 3.0, 5.0]);
        assert_eq!(clip_target_q(&[10.0, 3.0], 5.0, ClipOperator::Max), vec![10.0, 5.0]);
    }

    #[test]
    fn target_examples() {
        let clip = Some(ClipBound {
            bound: 5.0,
            op: ClipOperator::Min,
        });
        let t = assemble_target(&[1.0], &[false], &[2.0], 0.99, clip);
        assert!((t.y[0] - 2.98).abs() < 1e-12);
        assert_eq!(t.clip_active, 0);
        let t = assemble_target(&[1.0], &[false], &[10.0], 0.99, clip);
        assert!((t.y[0] - 5.95).abs() < 1e-12);
        assert_eq!(t.clip_active, 1);
        let t = assemble_target(&[1.0], &[true], &[1e9], 0.99, clip);
        assert_eq!(t.y[0], 1.0);
        assert_eq!(t.non_terminal, 0);
    }

    #[test]
    fn infinite_scale_leaves_targets_untouched() {
        let d = dataset("x", &[&[-3.0]]);
        let c = ClipBound::for_scale(&d, f64::INFINITY, ClipOperator::Min).unwrap();
        let q = [1e30, -1e30, 0.0];
        let clipped = assemble_target(&[0.5; 3], &[false; 3], &q, 0.9, Some(c));
        let plain = assemble_target(&[0.5; 3], &[false; 3], &q, 0.9, None);
        assert_eq!(clipped.y, plain.y);
        assert_eq!(clipped.clip_active, 0);
    }

    proptest! {
        #[test]
        fn clip_is_below_and_monotone(a in -1e6f64..1e6, b in -1e6f64..1e6, r in -1e6f64..1e6) {
            let ca = clip_target_q(&[a], r, ClipOperator::Min)[0];
            let cb = clip_target_q(&[b], r, ClipOperator::Min)[0];
            prop_assert!(ca <= a);
            if a <= b {
                prop_assert!(ca <= cb);
            }
        }

        #[test]
        fn target_respects_bound(
            rows in proptest::collection::vec((-10f64..10.0, any::<bool>(), -1e3f64..1e3), 1..64),
            r_star in -50f64..50.0,
            gamma in 0f64..1.0,
        ) {
            let rewards: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let dones: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let q: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let t = assemble_target(&rewards, &dones, &q, gamma, Some(ClipBound { bound: r_star, op: ClipOperator::Min }));
            for i in 0..rows.len() {
                if !dones[i] {
                    prop_assert!(t.y[i] <= rewards[i] + gamma * r_star);
                }
            }
        }
    }
}
