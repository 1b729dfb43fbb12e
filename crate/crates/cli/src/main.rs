use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatbench::config::ExperimentConfig;
use heatbench::experiment;
use heatbench::Result;

/// Classical vs. variational-quantum regression benchmark on weekly
/// heat-illness counts.
#[derive(Parser)]
#[command(name = "heatbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (`section.key = value` lines). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `run.out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Global seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build county_week.csv
    Synth,
    /// Fit preprocessing and both models
    Train,
    /// Predict the test regions
    Predict,
    /// Score predictions and write report files
    Evaluate,
    /// Print the comparison table
    Report,
    /// Run every stage and write the manifest
    All,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Synth => print_synth(&experiment::run_synth(&cfg, &out)?),
        Command::Train => print_train(&experiment::run_train(&cfg, &out)?),
        Command::Predict => {
            let p = experiment::run_predict(&cfg, &out)?;
            println!("wrote {} predictions to {}", p.len(), out.join(experiment::PREDICTIONS_FILE).display());
        }
        Command::Evaluate => {
            let reports = experiment::run_evaluate(&cfg, &out)?;
            for r in reports {
                println!("{}: mae {:.4}", r.model_name, r.mae);
            }
        }
        Command::Report => print!("{}", experiment::run_report(&out)?),
        Command::All => {
            let s = experiment::run_all(&cfg, &out)?;
            print_synth(&s.synth);
            print_train(&s.train);
            print!("{}", s.report_text);
        }
    }
    Ok(())
}

fn print_synth(s: &experiment::SynthSummary) {
    println!("{} rows, zero fraction {:.4} -> {}", s.rows, s.zero_fraction, s.path.display());
}

fn print_train(t: &experiment::TrainSummary) {
    println!(
        "trained on {} rows from {:?}; {} features kept, {} PCA components ({:.4} variance), {} qubits",
        t.train_rows,
        t.train_regions,
        t.kept_features.len(),
        t.pca_components,
        t.retained_variance_ratio,
        t.n_qubits
    );
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    println!("gbm train mse {:.4} -> {:.4}", t.gbm_trace[0], last(&t.gbm_trace));
    println!("qsm train mse {:.4} -> {:.4}", t.qsm_trace[0], last(&t.qsm_trace));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
