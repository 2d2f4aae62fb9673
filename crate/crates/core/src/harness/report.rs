//! BC/B3C diagnosis and the CSV tables behind the figures.
//!
//! Every table starts with a `# schema=<name>/<version>` line:
//!
//! | file | schema | columns |
//! |---|---|---|
//! | `alpha_sweep.csv` | `b3c-alpha-sweep/1` | dataset_tier, mixer, M, alpha, seeds, mean_return, std_return, worst_return, divergences |
//! | `curves.csv` | `b3c-curves/1` | step, return_bc, return_b3c, target_bc, target_b3c |
//! | `mixers.csv` | `b3c-mixers/1` | dataset_tier, vdn_minus_nonmono, mono_minus_nonmono |
//!
//! Curves average each variant over its seeds at every logged step; a step
//! missing from every seed of a variant leaves that cell empty. Mixer
//! differences are percentages of the nonmono arm's best mean return.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::algo::{MetricsLog, MixerKind};
use crate::error::{Error, Result};

pub const SWEEP_SCHEMA: &str = "b3c-alpha-sweep/1";
pub const CURVES_SCHEMA: &str = "b3c-curves/1";
pub const MIXERS_SCHEMA: &str = "b3c-mixers/1";

/// One metrics file of a diagnosed variant.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub path: PathBuf,
    pub log: MetricsLog,
}

impl RunLog {
    pub fn load(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let log = MetricsLog::load(&path)?;
        Ok(RunLog { path, log })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub runs: usize,
    /// `(file, halt step)` for every halted run.
    pub divergences: Vec<(PathBuf, u64)>,
    pub worst_final_return: f64,
    pub max_target_q: f64,
}

impl VariantSummary {
    pub fn of(runs: &[RunLog]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidSetting("a diagnosed variant needs at least one metrics file".into()));
        }
        let mut worst = f64::INFINITY;
        for r in runs {
            let ret = r.log.final_return().ok_or_else(|| {
                Error::InvalidSetting(format!("{}: metrics log has no records", r.path.display()))
            })?;
            worst = worst.min(ret);
        }
        Ok(VariantSummary {
            runs: runs.len(),
            divergences: runs
                .iter()
                .filter_map(|r| r.log.diverged_at().map(|s| (r.path.clone(), s)))
                .collect(),
            worst_final_return: worst,
            max_target_q: runs.iter().map(|r| r.log.max_target_q()).fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub bc: VariantSummary,
    pub b3c: VariantSummary,
    /// `100 · (b3c − bc) / |bc|` over worst-seed final returns.
    pub worst_seed_diff_pct: f64,
}

pub fn percent_diff(value: f64, base: f64) -> f64 {
    if value == base {
        0.0
    } else {
        100.0 * (value - base) / base.abs()
    }
}

pub fn diagnose(bc: &[RunLog], b3c: &[RunLog]) -> Result<Diagnosis> {
    let bc = VariantSummary::of(bc)?;
    let b3c = VariantSummary::of(b3c)?;
    let worst_seed_diff_pct = percent_diff(b3c.worst_final_return, bc.worst_final_return);
    Ok(Diagnosis {
        bc,
        b3c,
        worst_seed_diff_pct,
    })
}

impl Diagnosis {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, v) in [("bc", &self.bc), ("b3c", &self.b3c)] {
            let _ = writeln!(
                out,
                "{name}: runs={} divergence_events={} worst_final_return={} max_target_q={}",
                v.runs,
                v.divergences.len(),
                v.worst_final_return,
                v.max_target_q
            );
            for (path, step) in &v.divergences {
                let _ = writeln!(out, "  diverged at step {step}: {}", path.display());
            }
        }
        let _ = writeln!(out, "worst_seed_diff_pct={}", self.worst_seed_diff_pct);
        out
    }
}

fn mean_by_step(runs: &[RunLog], field: impl Fn(&crate::algo::MetricsRecord) -> f64) -> BTreeMap<u64, f64> {
    let mut acc: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in runs {
        for rec in r.log.records() {
            let e = acc.entry(rec.step).or_insert((0.0, 0));
            e.0 += field(rec);
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

pub fn curves_csv(bc: &[RunLog], b3c: &[RunLog]) -> String {
    let cols = [
        mean_by_step(bc, |r| r.eval_return),
        mean_by_step(b3c, |r| r.eval_return),
        mean_by_step(bc, |r| r.target_q_mean),
        mean_by_step(b3c, |r| r.target_q_mean),
    ];
    let mut steps: Vec<u64> = cols.iter().flat_map(|c| c.keys().copied()).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut out = format!("# schema={CURVES_SCHEMA}\nstep,return_bc,return_b3c,target_bc,target_b3c\n");
    for s in steps {
        let cells: Vec<String> = cols.iter().map(|c| c.get(&s).map(|v| v.to_string()).unwrap_or_default()).collect();
        let _ = writeln!(out, "{s},{}", cells.join(","));
    }
    out
}

/// One grid cell of an α sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub dataset_tier: String,
    pub mixer: MixerKind,
    pub clip_scale: f64,
    pub alpha: f64,
    pub final_returns: Vec<f64>,
    pub divergences: usize,
}

impl SweepCell {
    pub fn mean(&self) -> f64 {
        self.final_returns.iter().sum::<f64>() / self.final_returns.len() as f64
    }

    /// Sample standard deviation; zero for a single seed.
    pub fn std(&self) -> f64 {
        let n = self.final_returns.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.final_returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn worst(&self) -> f64 {
        self.final_returns.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = format!(
        "# schema={SWEEP_SCHEMA}\ndataset_tier,mixer,M,alpha,seeds,mean_return,std_return,worst_return,divergences\n"
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.dataset_tier,
            c.mixer,
            c.clip_scale,
            c.alpha,
            c.final_returns.len(),
            c.mean(),
            c.std(),
            c.worst(),
            c.divergences
        );
    }
    out
}

/// Per dataset tier, the best cell of each mixer compared with nonmono's.
/// `None` unless all three mixers appear for at least one tier.
pub fn mixers_csv(cells: &[SweepCell]) -> Option<String> {
    let mut tiers: Vec<&str> = Vec::new();
    for c in cells {
        if !tiers.contains(&c.dataset_tier.as_str()) {
            tiers.push(&c.dataset_tier);
        }
    }
    let best = |tier: &str, m: MixerKind| {
        cells
            .iter()
            .filter(|c| c.dataset_tier == tier && c.mixer == m)
            .map(SweepCell::mean)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    };
    let mut out = format!("# schema={MIXERS_SCHEMA}\ndataset_tier,vdn_minus_nonmono,mono_minus_nonmono\n");
    let mut rows = 0;
    for tier in tiers {
        if let (Some(v), Some(m), Some(n)) = (
            best(tier, MixerKind::Vdn),
            best(tier, MixerKind::Mono),
            best(tier, MixerKind::NonMono),
        ) {
            let _ = writeln!(out, "{tier},{},{}", percent_diff(v, n), percent_diff(m, n));
            rows += 1;
        }
    }
    (rows > 0).then_some(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
