//! The operations behind each CLI subcommand. Every command writes the
//! resolved config as `config.ini` into each directory it produces.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::config::RunConfig;
use super::report::{self, RunLog, SweepCell};
use super::store::{self, StoredOnline};
use crate::algo::{build_tiers, evaluate_policy, load_policies, save_policies, train_offline, train_online, Evaluation};
use crate::dataset::{self, compute_stats, generate_dataset, Behavior, DatasetStats, OfflineDataset};
use crate::error::{Error, Result};

pub const OUT_DIR_ENV: &str = "B3C_OUT_DIR";
pub const CONFIG_ECHO: &str = "config.ini";

/// `[run] out_dir`, else `$B3C_OUT_DIR`, else `runs`.
pub fn out_root(cfg: &RunConfig) -> PathBuf {
    cfg.run
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report::write_text(&dir.join(CONFIG_ECHO), &cfg.to_text())
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text)
}

fn dataset_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset
        .path
        .as_deref()
        .ok_or_else(|| Error::InvalidSetting("no dataset given (set [dataset] path)".into()))
}

pub fn metrics_file(seed: u64) -> String {
    format!("metrics_seed{seed}.csv")
}

pub fn policy_file(seed: u64) -> String {
    format!("policy_seed{seed}.b3cp")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_return: Option<f64>,
    pub diverged_at: Option<u64>,
}

/// One online run per seed, stored under `<out>/seed_<s>/`.
pub fn train_online_cmd(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    let root = out_root(cfg);
    prepare_dir(&root, cfg)?;
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut online = cfg.online.clone();
            online.train.seed = seed;
            let out = train_online(&cfg.env, &online)?;
            let dir = root.join(format!("seed_{seed}"));
            store::save_online(&dir, &out, &cfg.env)?;
            Ok(RunSummary {
                seed,
                dir,
                final_return: out.checkpoints.last().map(|c| c.eval_return),
                diverged_at: out.log.diverged_at(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierKind {
    Expert,
    Medium,
    MediumReplay,
    Random,
}

impl TierKind {
    pub const ALL: [TierKind; 4] = [TierKind::Expert, TierKind::Medium, TierKind::MediumReplay, TierKind::Random];
}

impl fmt::Display for TierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TierKind::Expert => "expert",
            TierKind::Medium => "medium",
            TierKind::MediumReplay => "medium-replay",
            TierKind::Random => "random",
        })
    }
}

impl FromStr for TierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        TierKind::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| format!("unknown tier `{s}` (expected expert, medium, medium-replay or random)"))
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedTier {
    pub tier: TierKind,
    pub path: PathBuf,
    pub stats: DatasetStats,
}

/// Writes `<out>/<tier>.b3cd` for each requested tier. Every tier except
/// `random` needs the directory of a stored online run. Layouts come from
/// `[env] seed`.
pub fn gen_dataset_cmd(cfg: &RunConfig, online_dir: Option<&Path>, tiers: &[TierKind]) -> Result<Vec<GeneratedTier>> {
    let root = out_root(cfg);
    let seed = cfg.env.seed;
    let d = &cfg.dataset;
    let needs_online = tiers.iter().any(|t| *t != TierKind::Random);
    let built = match (needs_online, online_dir) {
        (false, _) => None,
        (true, None) => {
            return Err(Error::InvalidSetting(
                "expert, medium and medium-replay tiers need an online run directory".into(),
            ))
        }
        (true, Some(dir)) => {
            let StoredOnline { checkpoints, replay, .. } = store::load_online(dir)?;
            Some(build_tiers(&checkpoints, &replay, &cfg.env, d.episodes, d.noise_std, seed)?)
        }
    };
    prepare_dir(&root, cfg)?;
    let mut out = Vec::with_capacity(tiers.len());
    for &tier in tiers {
        let data = match (&built, tier) {
            (Some(b), TierKind::Expert) => b.expert.clone(),
            (Some(b), TierKind::Medium) => b.medium.clone(),
            (Some(b), TierKind::MediumReplay) => b.medium_replay.clone(),
            (Some(b), TierKind::Random) => b.random.clone(),
            (None, _) => generate_dataset(Behavior::Uniform, &cfg.env, d.episodes, 0.0, seed, "random")?,
        };
        let path = root.join(format!("{tier}.b3cd"));
        dataset::save(&data, &path)?;
        out.push(GeneratedTier {
            tier,
            path,
            stats: compute_stats(&data),
        });
    }
    Ok(out)
}

pub fn stats_cmd(path: &Path) -> Result<DatasetStats> {
    Ok(compute_stats(&dataset::load(path)?))
}

/// One offline run per seed: `<out>/metrics_seed<s>.csv` and
/// `<out>/policy_seed<s>.b3cp`.
pub fn train_offline_cmd(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    let data = dataset::load(dataset_path(cfg)?)?;
    let root = out_root(cfg);
    prepare_dir(&root, cfg)?;
    offline_runs(cfg, &data, &root)
}

fn offline_runs(cfg: &RunConfig, data: &OfflineDataset, dir: &Path) -> Result<Vec<RunSummary>> {
    data.check_env(&cfg.env)?;
    cfg.run
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut train = cfg.train.clone();
            train.seed = seed;
            let out = train_offline(data, &cfg.env, &train)?;
            out.log.save(dir.join(metrics_file(seed)))?;
            save_policies(&out.policies, dir.join(policy_file(seed)))?;
            Ok(RunSummary {
                seed,
                dir: dir.to_path_buf(),
                final_return: out.log.final_return(),
                diverged_at: out.log.diverged_at(),
            })
        })
        .collect()
}

/// Noise-free rollouts of a saved policy over `[train] eval_episodes`
/// layouts drawn from `seed`.
pub fn evaluate_cmd(cfg: &RunConfig, policy: &Path, seed: u64) -> Result<Evaluation> {
    let policies = load_policies(policy)?;
    evaluate_policy(&policies, &cfg.env, cfg.train.eval_episodes, seed)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    pub summary: PathBuf,
    pub mixers: Option<PathBuf>,
}

fn label(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

/// Grid of datasets × mixers × M × α, each cell run for every seed. Cell
/// `d, m, M, α` lives in `<out>/<dataset stem>/<m>/M_<M>/alpha_<α>/`.
/// Writes `alpha_sweep.csv` and, when all three mixers ran, `mixers.csv`.
pub fn sweep_cmd(cfg: &RunConfig, datasets: &[PathBuf]) -> Result<SweepOutcome> {
    let paths: Vec<PathBuf> = if datasets.is_empty() {
        vec![dataset_path(cfg)?.to_path_buf()]
    } else {
        datasets.to_vec()
    };
    let mixers = if cfg.sweep.mixers.is_empty() { vec![cfg.train.mixer] } else { cfg.sweep.mixers.clone() };
    let scales = if cfg.sweep.clip_scales.is_empty() { vec![cfg.train.clip_scale] } else { cfg.sweep.clip_scales.clone() };
    if cfg.sweep.alphas.is_empty() {
        return Err(Error::InvalidSetting("sweep needs at least one alpha".into()));
    }
    let root = out_root(cfg);
    prepare_dir(&root, cfg)?;

    let mut jobs = Vec::new();
    for path in &paths {
        let data = dataset::load(path)?;
        data.check_env(&cfg.env)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
        for &mixer in &mixers {
            for &m in &scales {
                for &alpha in &cfg.sweep.alphas {
                    let mut cell = cfg.clone();
                    cell.dataset.path = Some(path.clone());
                    cell.train.mixer = mixer;
                    cell.train.clip_scale = m;
                    cell.train.alpha = alpha;
                    let dir = root.join(&stem).join(mixer.to_string()).join(format!("M_{}", label(m))).join(format!("alpha_{alpha}"));
                    cell.run.out_dir = Some(dir.clone());
                    prepare_dir(&dir, &cell)?;
                    jobs.push((data.meta().tag.clone(), data.clone(), cell, dir));
                }
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|(tag, data, cell, dir)| {
            let runs = offline_runs(cell, data, dir)?;
            Ok(SweepCell {
                dataset_tier: tag.clone(),
                mixer: cell.train.mixer,
                clip_scale: cell.train.clip_scale,
                alpha: cell.train.alpha,
                final_returns: runs.iter().map(|r| r.final_return.unwrap_or(f64::NAN)).collect(),
                divergences: runs.iter().filter(|r| r.diverged_at.is_some()).count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = root.join("alpha_sweep.csv");
    report::write_text(&summary, &report::sweep_csv(&cells))?;
    let mixers = match report::mixers_csv(&cells) {
        Some(text) => {
            let p = root.join("mixers.csv");
            report::write_text(&p, &text)?;
            Some(p)
        }
        None => None,
    };
    Ok(SweepOutcome { cells, summary, mixers })
}

/// Resolved config echoed next to a metrics file, if any.
fn sibling_config(metrics: &Path) -> Result<Option<RunConfig>> {
    let path = metrics.parent().unwrap_or(Path::new(".")).join(CONFIG_ECHO);
    if path.exists() {
        load_config(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// Compares BC and B3C runs. Runs whose directories carry a config echo must
/// agree on the environment and the dataset. With `out`, also writes
/// `curves.csv` there.
pub fn diagnose_cmd(bc: &[PathBuf], b3c: &[PathBuf], out: Option<&Path>) -> Result<report::Diagnosis> {
    let mut reference: Option<(PathBuf, RunConfig)> = None;
    for path in bc.iter().chain(b3c) {
        if let Some(cfg) = sibling_config(path)? {
            match &reference {
                None => reference = Some((path.clone(), cfg)),
                Some((first, r)) => {
                    if r.env != cfg.env {
                        return Err(Error::MismatchedRuns(format!(
                            "{} and {} use different environments",
                            first.display(),
                            path.display()
                        )));
                    }
                    if r.dataset.path != cfg.dataset.path {
                        return Err(Error::MismatchedRuns(format!(
                            "{} and {} were trained on different datasets",
                            first.display(),
                            path.display()
                        )));
                    }
                }
            }
        }
    }
    let load = |paths: &[PathBuf]| paths.iter().map(RunLog::load).collect::<Result<Vec<_>>>();
    let (bc, b3c) = (load(bc)?, load(b3c)?);
    let diagnosis = report::diagnose(&bc, &b3c)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        report::write_text(&dir.join("curves.csv"), &report::curves_csv(&bc, &b3c))?;
    }
    Ok(diagnosis)
}
