use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gcs_harness::{cmd_assimilate, cmd_generate, cmd_report, cmd_simulate, cmd_train, ExperimentConfig, HarnessError, Method};

/// Desk-scale injection-monitoring lab: channelized priors, a finite-volume
/// forward model, a spectral surrogate and four assimilation engines.
#[derive(Parser)]
#[command(name = "gcslab", version, about)]
struct Cli {
    /// Experiment configuration (INI); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output root; defaults to the config's paths.out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for member-parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override one named seed, e.g. --seed-override esmda=42 (repeatable).
    #[arg(long = "seed-override", global = true, value_name = "K=V")]
    seed_overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the prior ensemble and synthesize truth observations.
    Generate,
    /// Run the forward model on members lacking a trajectory (resumable).
    Simulate,
    /// Fit the surrogate on simulated members and write a checkpoint.
    Train,
    /// Condition the ensemble on the observations.
    Assimilate {
        /// esmda, rml, sh-esmda or sh-rml
        method: String,
        /// Surrogate checkpoint; defaults to <out>/surrogate/fno.gcsw.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Merge runs into a comparison report.
    Report {
        /// Assimilation run directories (e.g. out/runs/esmda).
        runs: Vec<PathBuf>,
        /// Training output directories for the accuracy table.
        #[arg(long = "training")]
        training: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for spec in &cli.seed_overrides {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| HarnessError::validation(format!("--seed-override wants K=V, got `{spec}`")))?;
        let value: u64 = value
            .parse()
            .map_err(|_| HarnessError::validation(format!("--seed-override {key}: `{value}` is not an integer")))?;
        cfg.override_seed(key, value).map_err(|e| HarnessError::validation(e.to_string()))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(HarnessError::validation("--workers must be at least 1"));
        }
        gcs_core::par::set_workers(workers);
    }
    let cfg = load_config(&cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));

    match &cli.command {
        Command::Generate => {
            cmd_generate(&cfg, &out)?;
            println!("generated {} members + truth under {}", cfg.ensemble.n_members, out.display());
        }
        Command::Simulate => {
            let n = cmd_simulate(&cfg, &out)?;
            println!("simulated {n} members ({} already present)", cfg.ensemble.n_members - n);
        }
        Command::Train => {
            let record = cmd_train(&cfg, &out)?;
            println!(
                "trained on {} samples ({} train / {} test): test RMSE {:.3} bar, {:.5} fraction",
                record.n_samples,
                record.n_train,
                record.n_test,
                record.final_test_rmse_pressure,
                record.final_test_rmse_fraction
            );
        }
        Command::Assimilate { method, checkpoint } => {
            let method = Method::parse(method)?;
            let dir = cmd_assimilate(method, &cfg, &out, checkpoint.as_deref())?;
            println!("{} posterior written to {}", method.name(), dir.display());
        }
        Command::Report { runs, training } => {
            let run_refs: Vec<&std::path::Path> = runs.iter().map(|p| p.as_path()).collect();
            let training_refs: Vec<&std::path::Path> = training.iter().map(|p| p.as_path()).collect();
            let report_dir = out.join("report");
            let report = cmd_report(&run_refs, &training_refs, &report_dir)?;
            println!("report over {} methods written to {}", report.methods.len(), report_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
