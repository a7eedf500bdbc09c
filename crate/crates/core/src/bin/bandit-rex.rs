use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, LevelFilter};

use bandit_rex::experiment::{
    evaluate_dataset, generate_dataset, read_metrics, run_experiment, summarize, write_results, ExperimentConfig,
    ExperimentResults, SummaryRow, METRICS_FILE,
};
use bandit_rex::io::{read_dataset, read_json, write_dataset, GROUND_TRUTH_FILE};
use bandit_rex::simdata::EnvConfig;
use bandit_rex::{Error, Result};

#[derive(Parser)]
#[command(name = "bandit-rex", version, about = "Diversity-constrained bandit experiments")]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: four domain CSVs, the interaction log
    /// and ground_truth.json.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Run every configured policy and write results.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Offline evaluators on a generated data directory.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-policy summary of a results directory.
    Report {
        /// Results directory; `--out` is accepted as an alias.
        dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). `generate` also accepts a bare environment
    /// config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; the config's output_dir, or `data` for generate.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the environment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated policy names to keep.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
}

impl Common {
    fn load(&self, allow_env: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            None => ExperimentConfig::default(),
            Some(path) if allow_env => load_any(path)?,
            Some(path) => ExperimentConfig::from_path(path)?,
        };
        if let Some(seed) = self.seed {
            cfg.environment.seed = seed;
        }
        if let Some(names) = &self.policies {
            cfg.retain_policies(names)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// An experiment config, or a bare environment config wrapped in the
/// default experiment.
fn load_any(path: &Path) -> Result<ExperimentConfig> {
    match ExperimentConfig::from_path(path) {
        Ok(cfg) => Ok(cfg),
        Err(err @ Error::InvalidConfig { .. }) => match read_json::<EnvConfig>(path) {
            Ok(environment) => Ok(ExperimentConfig {
                environment,
                ..ExperimentConfig::default()
            }),
            Err(_) => Err(err),
        },
        Err(e) => Err(e),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::MissingFile(_) => 2,
        Error::SolverFailure { .. } => 3,
        _ => 1,
    }
}

fn print_summary(rows: &[SummaryRow]) {
    let width = rows.iter().map(|r| r.policy.len()).max().unwrap_or(6).max(6);
    let mwidth = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    println!("{:<width$}  {:<mwidth$}  {:>10}  {:>10}", "policy", "metric", "mean", "std_error");
    for r in rows {
        println!(
            "{:<width$}  {:<mwidth$}  {:>10.6}  {:>10.6}",
            r.policy, r.metric, r.value, r.std_error
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { common } => {
            let cfg = common.load(true)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("data"));
            let (env, data) = generate_dataset(&cfg)?;
            write_dataset(&out, &env, &data)?;
            info!(
                "wrote {} users, {} challenges, {} interactions to {}",
                env.users.len(),
                env.catalog.len(),
                data.log.records.len(),
                out.display()
            );
            if !cli.quiet {
                println!("{}", out.join(GROUND_TRUTH_FILE).display());
            }
        }
        Command::Run { common } => {
            let mut cfg = common.load(false)?;
            if let Some(out) = &common.out {
                cfg.output_dir = out.clone();
            }
            let results: ExperimentResults = run_experiment(&cfg)?;
            write_results(&cfg.output_dir, &cfg, &results)?;
            info!("wrote results to {}", cfg.output_dir.display());
            if !cli.quiet {
                print_summary(&summarize(&results.metrics, cfg.environment.seed));
            }
        }
        Command::Evaluate { common, data } => {
            let mut cfg = common.load(false)?;
            if let Some(out) = &common.out {
                cfg.output_dir = out.clone();
            }
            let dataset = read_dataset(data)?;
            let metrics = evaluate_dataset(&cfg, &dataset)?;
            let results = ExperimentResults {
                metrics,
                ..ExperimentResults::default()
            };
            write_results(&cfg.output_dir, &cfg, &results)?;
            if !cli.quiet {
                print_summary(&summarize(&results.metrics, dataset.environment.config.seed));
            }
        }
        Command::Report { dir, out } => {
            let dir = dir
                .clone()
                .or_else(|| out.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let metrics = read_metrics(&dir.join(METRICS_FILE))?;
            print_summary(&summarize(&metrics, 0));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { LevelFilter::Error } else { LevelFilter::Info })
        .parse_default_env()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
