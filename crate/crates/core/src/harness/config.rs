//! Run configuration files.
//!
//! ```text
//! # keys before the first section belong to [train]
//! alpha = 16
//! M = inf
//!
//! [env]
//! n_agents = 3
//! obs_k = all
//!
//! [online]          # online-only keys, plus any [train] key for the online learner
//! env_steps = 100000
//! mixer = vdn
//!
//! [dataset]
//! path = data/medium.b3cd
//!
//! [run]
//! seeds = 0, 1, 2
//!
//! [sweep]
//! alphas = 0.5, 1, 4
//! ```
//!
//! Every key has a default; unknown keys, duplicates and bad values are
//! errors naming the key and its line. [`RunConfig::to_text`] writes every
//! resolved value back in the same format.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::algo::{CriticKind, MixerKind, OnlineConfig, TrainConfig};
use crate::env::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSettings {
    pub path: Option<PathBuf>,
    /// Episodes per generated tier.
    pub episodes: usize,
    /// Behavior noise for the expert and medium tiers.
    pub noise_std: f64,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        DatasetSettings {
            path: None,
            episodes: 200,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// Falls back to `$B3C_OUT_DIR`, then `runs`.
    pub out_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            out_dir: None,
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub alphas: Vec<f64>,
    /// Empty means the single `[train] M`.
    pub clip_scales: Vec<f64>,
    /// Empty means the single `[train] mixer`.
    pub mixers: Vec<MixerKind>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            alphas: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            clip_scales: Vec::new(),
            mixers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub online: OnlineConfig,
    pub dataset: DatasetSettings,
    pub run: RunSettings,
    pub sweep: SweepSettings,
}

const SECTIONS: [&str; 6] = ["train", "env", "online", "dataset", "run", "sweep"];

type SetResult = std::result::Result<(), String>;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = "train";
        let mut seen: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').map(str::trim).ok_or_else(|| Error::Config {
                    key: content.to_string(),
                    line,
                    message: "unterminated section header".into(),
                })?;
                section = SECTIONS.iter().find(|s| **s == name).ok_or_else(|| Error::Config {
                    key: format!("[{name}]"),
                    line,
                    message: format!("unknown section (expected one of {})", SECTIONS.join(", ")),
                })?;
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                key: content.to_string(),
                line,
                message: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), unquote(value.trim()));
            let err = |message: String| Error::Config {
                key: key.to_string(),
                line,
                message,
            };
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            if seen.iter().any(|(s, k)| s == section && k == key) {
                return Err(err(format!("duplicate key in [{section}]")));
            }
            seen.push((section.to_string(), key.to_string()));
            cfg.set(section, key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        self.online.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidSetting("seed list is empty".into()));
        }
        Ok(())
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> SetResult {
        let unknown = || Err(format!("unknown key in [{section}]"));
        match section {
            "train" => set_train(&mut self.train, key, value).unwrap_or_else(unknown),
            "online" => match key {
                "env_steps" => count(value, 0).map(|v| self.online.env_steps = v),
                "start_steps" => count(value, 0).map(|v| self.online.start_steps = v),
                "explore_std" => real(value, 0.0, f64::MAX).map(|v| self.online.explore_std = v),
                "buffer_capacity" => count(value, 1).map(|v| self.online.buffer_capacity = v),
                "checkpoint_every" => count(value, 1).map(|v| self.online.checkpoint_every = v),
                _ => set_train(&mut self.online.train, key, value).unwrap_or_else(unknown),
            },
            "env" => {
                let e = &mut self.env;
                match key {
                    "n_agents" => count(value, 2).map(|v| e.n_agents = v),
                    "arena_half_width" => positive(value).map(|v| e.arena_half_width = v),
                    "episode_len" => count(value, 1).map(|v| e.episode_len = v),
                    "step_size" => positive(value).map(|v| e.step_size = v),
                    "collision_radius" => real(value, 0.0, f64::MAX).map(|v| e.collision_radius = v),
                    "collision_penalty" => real(value, 0.0, f64::MAX).map(|v| e.collision_penalty = v),
                    "obs_k" => {
                        if value == "all" {
                            e.obs_k = None;
                            Ok(())
                        } else {
                            count(value, 1).map(|v| e.obs_k = Some(v))
                        }
                    }
                    "seed" => parse::<u64>(value, "an unsigned integer").map(|v| e.seed = v),
                    _ => unknown(),
                }
            }
            "dataset" => match key {
                "path" => {
                    self.dataset.path = (!value.is_empty()).then(|| PathBuf::from(value));
                    Ok(())
                }
                "episodes" => count(value, 1).map(|v| self.dataset.episodes = v),
                "noise_std" => real(value, 0.0, f64::MAX).map(|v| self.dataset.noise_std = v),
                _ => unknown(),
            },
            "run" => match key {
                "out_dir" => {
                    self.run.out_dir = (!value.is_empty()).then(|| PathBuf::from(value));
                    Ok(())
                }
                "seeds" => list(value, |s| parse::<u64>(s, "an unsigned integer")).and_then(|v| {
                    if v.is_empty() {
                        Err("needs at least one seed".into())
                    } else {
                        self.run.seeds = v;
                        Ok(())
                    }
                }),
                _ => unknown(),
            },
            "sweep" => match key {
                "alphas" => list(value, |s| real(s, 0.0, f64::MAX)).map(|v| self.sweep.alphas = v),
                "clip_scales" | "M" => list(value, clip_scale).map(|v| self.sweep.clip_scales = v),
                "mixers" => list(value, |s| s.parse::<MixerKind>()).map(|v| self.sweep.mixers = v),
                _ => unknown(),
            },
            _ => unreachable!("section names are checked on entry"),
        }
    }

    /// Every resolved value, in a form [`RunConfig::parse`] reads back to an
    /// equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[train]\n");
        write_train(&mut out, &self.train);

        let e = &self.env;
        out.push_str("\n[env]\n");
        let _ = writeln!(out, "n_agents = {}", e.n_agents);
        let _ = writeln!(out, "arena_half_width = {}", e.arena_half_width);
        let _ = writeln!(out, "episode_len = {}", e.episode_len);
        let _ = writeln!(out, "step_size = {}", e.step_size);
        let _ = writeln!(out, "collision_radius = {}", e.collision_radius);
        let _ = writeln!(out, "collision_penalty = {}", e.collision_penalty);
        match e.obs_k {
            Some(k) => _ = writeln!(out, "obs_k = {k}"),
            None => out.push_str("obs_k = all\n"),
        }
        let _ = writeln!(out, "seed = {}", e.seed);

        let o = &self.online;
        out.push_str("\n[online]\n");
        let _ = writeln!(out, "env_steps = {}", o.env_steps);
        let _ = writeln!(out, "start_steps = {}", o.start_steps);
        let _ = writeln!(out, "explore_std = {}", o.explore_std);
        let _ = writeln!(out, "buffer_capacity = {}", o.buffer_capacity);
        let _ = writeln!(out, "checkpoint_every = {}", o.checkpoint_every);
        write_train(&mut out, &o.train);

        let d = &self.dataset;
        out.push_str("\n[dataset]\n");
        let _ = writeln!(out, "path = {}", d.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        let _ = writeln!(out, "episodes = {}", d.episodes);
        let _ = writeln!(out, "noise_std = {}", d.noise_std);

        out.push_str("\n[run]\n");
        let _ = writeln!(out, "out_dir = {}", self.run.out_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        let _ = writeln!(out, "seeds = {}", join(&self.run.seeds));

        let s = &self.sweep;
        out.push_str("\n[sweep]\n");
        let _ = writeln!(out, "alphas = {}", join(&s.alphas));
        let _ = writeln!(out, "clip_scales = {}", join(&s.clip_scales));
        let _ = writeln!(out, "mixers = {}", join(&s.mixers));
        out
    }
}

fn set_train(t: &mut TrainConfig, key: &str, value: &str) -> Option<SetResult> {
    Some(match key {
        "alpha" => real(value, 0.0, f64::MAX).map(|v| t.alpha = v),
        "beta" => real(value, 0.0, f64::MAX).map(|v| t.beta = v),
        "M" | "clip_scale" => clip_scale(value).map(|v| t.clip_scale = v),
        "clip_operator" => value.parse().map(|v| t.clip_operator = v),
        "regularizer" => value.parse().map(|v| t.regularizer = v),
        "normalize_q" => flag(value).map(|v| t.normalize_q = v),
        "gamma" => real(value, 0.0, 1.0).and_then(|v| {
            if v < 1.0 {
                t.gamma = v;
                Ok(())
            } else {
                Err("must be below 1".into())
            }
        }),
        "tau" => real(value, 0.0, 1.0).and_then(|v| {
            if v > 0.0 {
                t.tau = v;
                Ok(())
            } else {
                Err("must be above 0".into())
            }
        }),
        "batch_size" => count(value, 1).map(|v| t.batch_size = v),
        "critic" => value.parse::<CriticKind>().map(|v| t.critic_kind = v),
        "mixer" => value.parse().map(|v| t.mixer = v),
        "twin_critics" => flag(value).map(|v| t.twin_critics = v),
        "timeout_bootstrap" => flag(value).map(|v| t.timeout_bootstrap = v),
        "policy_delay" => count(value, 1).map(|v| t.policy_delay = v),
        "target_noise_std" => real(value, 0.0, f64::MAX).map(|v| t.target_noise_std = v),
        "target_noise_clip" => real(value, 0.0, f64::MAX).map(|v| t.target_noise_clip = v),
        "total_steps" => count(value, 0).map(|v| t.total_steps = v),
        "eval_every" => count(value, 1).map(|v| t.eval_every = v),
        "eval_episodes" => count(value, 1).map(|v| t.eval_episodes = v),
        "actor_lr" => positive(value).map(|v| t.actor_lr = v),
        "critic_lr" => positive(value).map(|v| t.critic_lr = v),
        "hidden" => list(value, |s| count(s, 1)).and_then(|v| {
            if v.is_empty() {
                Err("needs at least one width".into())
            } else {
                t.hidden = v;
                Ok(())
            }
        }),
        "mixer_embed" => count(value, 1).map(|v| t.mixer_embed = v),
        "hyper_hidden" => count(value, 1).map(|v| t.hyper_hidden = v),
        "divergence_factor" => positive(value).map(|v| t.divergence_factor = v),
        _ => return None,
    })
}

fn write_train(out: &mut String, t: &TrainConfig) {
    let _ = writeln!(out, "alpha = {}", t.alpha);
    let _ = writeln!(out, "beta = {}", t.beta);
    let _ = writeln!(out, "M = {}", t.clip_scale);
    let _ = writeln!(out, "clip_operator = {}", t.clip_operator);
    let _ = writeln!(out, "regularizer = {}", t.regularizer);
    let _ = writeln!(out, "normalize_q = {}", t.normalize_q);
    let _ = writeln!(out, "gamma = {}", t.gamma);
    let _ = writeln!(out, "tau = {}", t.tau);
    let _ = writeln!(out, "batch_size = {}", t.batch_size);
    let _ = writeln!(out, "critic = {}", t.critic_kind);
    let _ = writeln!(out, "mixer = {}", t.mixer);
    let _ = writeln!(out, "twin_critics = {}", t.twin_critics);
    let _ = writeln!(out, "timeout_bootstrap = {}", t.timeout_bootstrap);
    let _ = writeln!(out, "policy_delay = {}", t.policy_delay);
    let _ = writeln!(out, "target_noise_std = {}", t.target_noise_std);
    let _ = writeln!(out, "target_noise_clip = {}", t.target_noise_clip);
    let _ = writeln!(out, "total_steps = {}", t.total_steps);
    let _ = writeln!(out, "eval_every = {}", t.eval_every);
    let _ = writeln!(out, "eval_episodes = {}", t.eval_episodes);
    let _ = writeln!(out, "actor_lr = {}", t.actor_lr);
    let _ = writeln!(out, "critic_lr = {}", t.critic_lr);
    let _ = writeln!(out, "hidden = {}", join(&t.hidden));
    let _ = writeln!(out, "mixer_embed = {}", t.mixer_embed);
    let _ = writeln!(out, "hyper_hidden = {}", t.hyper_hidden);
    let _ = writeln!(out, "divergence_factor = {}", t.divergence_factor);
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn parse<T: FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("expected {what}, got `{value}`"))
}

fn real(value: &str, lo: f64, hi: f64) -> std::result::Result<f64, String> {
    let v: f64 = parse(value, "a number")?;
    if v.is_nan() {
        return Err("expected a number, got NaN".into());
    }
    if v < lo || v > hi {
        return Err(format!("{v} is out of range [{lo}, {hi}]"));
    }
    Ok(v)
}

fn positive(value: &str) -> std::result::Result<f64, String> {
    let v = real(value, 0.0, f64::MAX)?;
    if v == 0.0 {
        return Err("must be positive".into());
    }
    Ok(v)
}

/// `M`: positive, or `inf` to disable clipping.
fn clip_scale(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(value, "a positive number or inf")?;
    if !(v > 0.0) {
        return Err(format!("must be positive or inf, got {value}"));
    }
    Ok(v)
}

fn count(value: &str, min: usize) -> std::result::Result<usize, String> {
    let v: usize = parse(value, "a non-negative integer")?;
    if v < min {
        return Err(format!("must be at least {min}, got {v}"));
    }
    Ok(v)
}

fn flag(value: &str) -> std::result::Result<bool, String> {
    parse(value, "true or false")
}

fn list<T>(value: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| item(s.trim())).collect()
}
