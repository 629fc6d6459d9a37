//! `qlifcast`: preprocessing, training, evaluation and QLIF vs LIF
//! comparison runs from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qlifcast::config::{ExperimentConfig, Phase};
use qlifcast::literature;
use qlifcast::runner::{self, VERIFY_SHOTS};
use qlifcast::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "qlifcast", version, about = "Quantum and classical spiking forecasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest, clean and window a CSV; writes the dataset cache.
    Preprocess(RunArgs),
    /// Train one model on the first seed.
    Train(RunArgs),
    /// Score a saved checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to load; defaults to the one `train` writes for this config.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train QLIF and LIF models on every seed and compare them.
    Compare(RunArgs),
    /// Check the analytic QLIF update against the state-vector simulator.
    QsimVerify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = VERIFY_SHOTS)]
        shots: u64,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment config; unset keys fall back to the phase defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    phase: Option<Phase>,
    /// Raw CSV, overriding `dataset.csv`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Fraction of the split to use, for quick runs.
    #[arg(long)]
    device_scale: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let cfg = ExperimentConfig::load(path)?;
                if let Some(phase) = self.phase.filter(|&p| p != cfg.phase) {
                    return Err(Error::Config(format!(
                        "--phase {} conflicts with phase {} in {}",
                        phase.label(),
                        cfg.phase.label(),
                        path.display()
                    )));
                }
                cfg
            }
            None => ExperimentConfig::for_phase(self.phase.unwrap_or(Phase::Phase1)),
        };
        if let Some(data) = &self.data {
            cfg.dataset.csv = Some(data.clone());
            cfg.dataset.cache = None;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(n) = self.max_epochs {
            cfg.training.max_epochs = n;
        }
        if let Some(scale) = self.device_scale {
            cfg.device_scale = scale;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Preprocess(args) => {
            let cfg = args.resolve()?;
            let s = runner::cmd_preprocess(&cfg)?;
            println!(
                "{}: {} raw rows, {} clean, {} used; {} train / {} test windows",
                s.dataset, s.raw_rows, s.clean_rows, s.rows_used, s.n_train, s.n_test
            );
            println!("wrote {}", cfg.out_dir.join(runner::DATASET_CACHE).display());
        }
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let run = runner::cmd_train(&cfg)?;
            let r = &run.report;
            println!(
                "{} seed {}: {} params, {} epochs (best {}), {:.1} s",
                r.neuron_kind, r.seed, r.param_count, r.epochs_run, r.best_epoch, run.train_seconds
            );
            print!("{}", r.metrics.to_csv());
            println!("artifacts in {}", run.dir.display());
            print!("{}", literature::footer());
        }
        Command::Evaluate { run, checkpoint } => {
            let cfg = run.resolve()?;
            let metrics = runner::cmd_evaluate(&cfg, checkpoint.as_deref())?;
            print!("{}", metrics.to_csv());
            print!("{}", literature::footer());
        }
        Command::Compare(args) => {
            let cfg = args.resolve()?;
            let report = runner::cmd_compare(&cfg)?;
            let s = &report.summary;
            for p in &s.pairs {
                println!("seed {}: qlif MSE {:.4}, lif MSE {:.4}", p.seed, p.qlif_mse, p.lif_mse);
            }
            println!(
                "median MSE qlif {:.4} vs lif {:.4} ({:+.1}%); mean-predictor MSE {:.4}",
                s.median_mse_qlif, s.median_mse_lif, s.mse_change_pct, s.baseline_mse
            );
            println!("params per model: {}", s.param_count);
            println!("reports in {}", report.dir.display());
        }
        Command::QsimVerify { seed, shots } => {
            let report = runner::cmd_qsim_verify(shots, seed)?;
            print!("{}", report.to_csv());
            if !report.passed() {
                eprintln!(
                    "analytic and state-vector probabilities differ by {:.3e}",
                    report.max_exact_deviation()
                );
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
