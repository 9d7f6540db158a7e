use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sepsis_core::pipeline::{self, PipelineError, RunConfig};

/// Early sepsis prediction pipeline.
#[derive(Parser)]
#[command(name = "sepsis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and its ground truth.
    Synth(Common),
    /// Read and validate a wide hourly CSV.
    Ingest(Common),
    /// Apply cohort filters to the ingested cohort.
    Clean(Common),
    /// Split, prune, impute, engineer and select features.
    Features(Common),
    /// Train the full and non-statistical models.
    Train(Common),
    /// Route test encounters and write per-hour probabilities.
    Predict(Common),
    /// Threshold sweep over test predictions.
    Evaluate(Common),
    /// Tree-Shapley attribution summary for the full model.
    Explain(Common),
    /// Every stage in one process, with a manifest.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the configured input CSV.
    #[arg(long)]
    input: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.paths.output = o.clone();
        }
        if let Some(i) = &self.input {
            cfg.paths.input = Some(i.clone());
        }
        Ok(cfg)
    }
}

fn report(paths: Vec<PathBuf>) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn dispatch(cmd: &Command) -> Result<(), PipelineError> {
    let (common, stage): (&Common, fn(&RunConfig) -> Result<Vec<PathBuf>, PipelineError>) = match cmd {
        Command::Run(c) => {
            let cfg = c.config()?;
            let summary = pipeline::run_pipeline(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).map_err(|e| PipelineError::stage("summary", e))?
            );
            println!("artifacts in {}", cfg.paths.output.display());
            return Ok(());
        }
        Command::Synth(c) => (c, pipeline::stage_synth),
        Command::Ingest(c) => (c, pipeline::stage_ingest),
        Command::Clean(c) => (c, pipeline::stage_clean),
        Command::Features(c) => (c, pipeline::stage_features),
        Command::Train(c) => (c, pipeline::stage_train),
        Command::Predict(c) => (c, pipeline::stage_predict),
        Command::Evaluate(c) => (c, pipeline::stage_evaluate),
        Command::Explain(c) => (c, pipeline::stage_explain),
    };
    report(stage(&common.config()?)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
