use std::path::PathBuf;
use std::process::ExitCode;

use b3c_core::harness::{self, RunConfig, TierKind};
use b3c_core::{DatasetStats, Error, MixerKind};
use clap::{Parser, Subcommand};

/// Exit code for command-line usage errors (clap's convention).
const USAGE_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "b3c", version, about = "Offline multi-agent RL with behavior cloning and critic clipping")]
struct Cli {
    /// Config file (`key = value` lines, `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `[run] out_dir`, then $B3C_OUT_DIR, then ./runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seed list overriding `[run] seeds`.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train behavior policies online; one directory per seed.
    TrainOnline {
        #[arg(long)]
        env_steps: Option<usize>,
    },
    /// Write dataset tiers built from an online run.
    GenDataset {
        /// Tiers to write; all four by default.
        #[arg(long, value_delimiter = ',')]
        tier: Option<Vec<TierKind>>,
        /// Directory of one stored online run (`train-online` output `seed_<s>`).
        #[arg(long)]
        online: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Print a dataset's statistics as one CSV row.
    Stats {
        dataset: PathBuf,
        /// Also print the column names.
        #[arg(long)]
        header: bool,
    },
    /// Train offline on a dataset, one run per seed.
    TrainOffline {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a saved policy without exploration noise.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train over a grid of datasets, mixers, M and alpha.
    Sweep {
        #[arg(long)]
        dataset: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        #[arg(long = "m", value_delimiter = ',')]
        clip_scale: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        mixer: Option<Vec<MixerKind>>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare BC-only and B3C metrics files.
    Diagnose {
        #[arg(long, num_args = 1.., required = true)]
        bc: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        b3c: Vec<PathBuf>,
    },
}

fn resolve(cli: &Cli) -> b3c_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => harness::load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.run.out_dir = Some(out.clone());
    }
    if let Some(seeds) = &cli.seeds {
        cfg.run.seeds = seeds.clone();
    }
    match &cli.command {
        Command::TrainOnline { env_steps } => {
            if let Some(n) = env_steps {
                cfg.online.env_steps = *n;
            }
        }
        Command::GenDataset { episodes, .. } => {
            if let Some(n) = episodes {
                cfg.dataset.episodes = *n;
            }
        }
        Command::TrainOffline { dataset, steps } => {
            if let Some(d) = dataset {
                cfg.dataset.path = Some(d.clone());
            }
            if let Some(n) = steps {
                cfg.train.total_steps = *n;
            }
        }
        Command::Evaluate { episodes, .. } => {
            if let Some(n) = episodes {
                cfg.train.eval_episodes = *n;
            }
        }
        Command::Sweep {
            alpha,
            clip_scale,
            mixer,
            steps,
            ..
        } => {
            if let Some(a) = alpha {
                cfg.sweep.alphas = a.clone();
            }
            if let Some(m) = clip_scale {
                cfg.sweep.clip_scales = m.clone();
            }
            if let Some(m) = mixer {
                cfg.sweep.mixers = m.clone();
            }
            if let Some(n) = steps {
                cfg.train.total_steps = *n;
            }
        }
        Command::Stats { .. } | Command::Diagnose { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn print_runs(runs: &[harness::RunSummary]) {
    println!("seed,final_return,diverged_at,dir");
    for r in runs {
        println!("{},{},{},{}", r.seed, opt(r.final_return), opt(r.diverged_at), r.dir.display());
    }
}

fn run(cli: Cli) -> b3c_core::Result<()> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::TrainOnline { .. } => print_runs(&harness::train_online_cmd(&cfg)?),
        Command::GenDataset { tier, online, .. } => {
            let tiers = tier.unwrap_or_else(|| TierKind::ALL.to_vec());
            println!("tier,{},path", DatasetStats::CSV_HEADER);
            for t in harness::gen_dataset_cmd(&cfg, online.as_deref(), &tiers)? {
                println!("{},{},{}", t.tier, t.stats.csv_row(), t.path.display());
            }
        }
        Command::Stats { dataset, header } => {
            let stats = harness::stats_cmd(&dataset)?;
            if header {
                println!("{}", DatasetStats::CSV_HEADER);
            }
            println!("{}", stats.csv_row());
        }
        Command::TrainOffline { .. } => print_runs(&harness::train_offline_cmd(&cfg)?),
        Command::Evaluate { policy, seed, .. } => {
            let eval = harness::evaluate_cmd(&cfg, &policy, seed)?;
            println!("mean_return,episodes");
            println!("{},{}", eval.mean_return, eval.returns.len());
        }
        Command::Sweep { dataset, .. } => {
            let out = harness::sweep_cmd(&cfg, &dataset)?;
            print!("{}", b3c_core::harness::report::sweep_csv(&out.cells));
        }
        Command::Diagnose { bc, b3c } => {
            let out = cli.out.as_deref();
            print!("{}", harness::diagnose_cmd(&bc, &b3c, out)?.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(USAGE_EXIT);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let one_line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {one_line}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code().clamp(1, 255) as u8
}
