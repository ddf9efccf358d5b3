//! `imia`: train a target model, attack it, and score membership signals
//! from one JSON experiment config.
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use imia_core::data::load_checkpoint;
use imia_core::experiment::{self, ExperimentConfig, CHECKPOINT_FILE};
use imia_core::oracle::AccessLevel;
use imia_core::remote::serve_oracle;
use imia_core::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "imia", version, about = "Iteration-based membership inference toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target model and write a checkpoint.
    Train(Common),
    /// Attack the member/non-member pool and write the attack table.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to attack (default: <out>/model.json).
        #[arg(long, conflicts_with = "endpoint")]
        checkpoint: Option<PathBuf>,
        /// Attack a model served by `imia serve` instead of a local checkpoint.
        #[arg(long)]
        endpoint: Option<String>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score every configured signal and write the report.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Attack table (default: <out>/attacks.csv).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Serve a checkpoint over TCP until interrupted.
    Serve {
        /// Config used for defaults (checkpoint location, access level).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        access: Option<Access>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        endpoint: String,
    },
    /// Write histogram, scatter and ROC data for plotting.
    FigureData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Access {
    WhiteBox,
    Scores,
    LabelOnly,
}

impl From<Access> for AccessLevel {
    fn from(a: Access) -> Self {
        match a {
            Access::WhiteBox => AccessLevel::WhiteBox,
            Access::Scores => AccessLevel::Scores,
            Access::LabelOnly => AccessLevel::LabelOnly,
        }
    }
}

impl Common {
    fn load(&self) -> imia_core::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(cli: Cli) -> imia_core::Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let s = experiment::run_train(&cfg)?;
            println!(
                "train accuracy {:.4}, test accuracy {:.4} ({} epochs, final loss {:.4})",
                s.train_accuracy, s.test_accuracy, s.epochs, s.final_loss
            );
        }
        Command::Attack {
            common,
            checkpoint,
            endpoint,
            workers,
        } => {
            let cfg = common.load()?;
            let workers = workers.unwrap_or_else(default_workers);
            if workers == 0 {
                return Err(Error::InvalidConfig("--workers must be at least 1".into()));
            }
            let rows = match endpoint {
                Some(ep) => experiment::run_attack_remote(&cfg, &ep, workers)?,
                None => experiment::run_attack(&cfg, checkpoint.as_deref(), workers)?,
            };
            let successes = rows.iter().filter(|r| r.success).count();
            println!(
                "attacked {} samples with {} ({successes} successful), wrote {}",
                rows.len(),
                cfg.attack.strategy(),
                cfg.output_dir.join(experiment::ATTACK_TABLE_FILE).display()
            );
        }
        Command::Eval { common, table } => {
            let cfg = common.load()?;
            let report = experiment::run_eval(&cfg, table.as_deref())?;
            for m in &report.metrics {
                println!(
                    "{:<20} AUROC {:.4} ± {:.4}  accuracy {:.4} ± {:.4}",
                    m.kind.to_string(),
                    m.auroc.mean,
                    m.auroc.std,
                    m.accuracy.mean,
                    m.accuracy.std
                );
            }
        }
        Command::Serve {
            config,
            out,
            checkpoint,
            access,
            endpoint,
        } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let checkpoint = match (checkpoint, &cfg) {
                (Some(p), _) => p,
                (None, Some(cfg)) => out.unwrap_or_else(|| cfg.output_dir.clone()).join(CHECKPOINT_FILE),
                (None, None) => return Err(Error::InvalidConfig("serve needs --checkpoint or --config".into())),
            };
            let level = access
                .map(AccessLevel::from)
                .or(cfg.map(|c| c.attack.setting.access_level()))
                .unwrap_or(AccessLevel::Scores);
            let (net, _) = load_checkpoint(&checkpoint)?;
            let server = serve_oracle(Arc::new(net), level, &endpoint)?;
            let (tx, rx) = mpsc::channel();
            ctrlc::set_handler(move || {
                let _ = tx.send(());
            })
            .map_err(|e| Error::Remote(format!("cannot install signal handler: {e}")))?;
            println!(
                "serving {} at {level} access on {}",
                checkpoint.display(),
                server.local_addr()
            );
            let _ = rx.recv();
            let stats = server.shutdown();
            println!(
                "shutdown: {} queries ({} scores, {} label, {} gradient)",
                stats.total(),
                stats.queries_scores,
                stats.queries_label,
                stats.queries_gradient
            );
        }
        Command::FigureData { common, table } => {
            let cfg = common.load()?;
            for path in experiment::run_figure_data(&cfg, table.as_deref())? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Io => 3,
                ErrorCategory::Runtime => 4,
            })
        }
    }
}
