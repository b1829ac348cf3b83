use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imfmix_cli::{run_pipeline, run_stage, PipelineConfig, PipelineError, Stage};

/// MEMD trial enhancement pipeline.
#[derive(Debug, Parser)]
#[command(name = "imfmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset to <out>/dataset.
    Simulate(Common),
    /// Decompose every trial of the training run with MEMD.
    Decompose(Common),
    /// Export time-frequency images of decomposed trials as PGM.
    Tfr(Common),
    /// Score IMF images by entropy and pick the relevant IMFs.
    Select(Common),
    /// Export the substitution plans for every level and repetition.
    Augment(Common),
    /// Export band-power features of the training and test runs.
    Features(Common),
    /// Run the substitution experiment and write per-repetition errors.
    Classify(Common),
    /// Double-MAD audit of the classification results.
    Audit(Common),
    /// Every stage in order, then summary.json.
    Pipeline(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON pipeline configuration; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides the root seed of the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (stage, common) = match &cli.command {
        Command::Simulate(c) => (Some(Stage::Simulate), c),
        Command::Decompose(c) => (Some(Stage::Decompose), c),
        Command::Tfr(c) => (Some(Stage::Tfr), c),
        Command::Select(c) => (Some(Stage::Select), c),
        Command::Augment(c) => (Some(Stage::Augment), c),
        Command::Features(c) => (Some(Stage::Features), c),
        Command::Classify(c) => (Some(Stage::Classify), c),
        Command::Audit(c) => (Some(Stage::Audit), c),
        Command::Pipeline(c) => (None, c),
    };
    let cfg = common.config()?;
    match stage {
        Some(stage) => run_stage(stage, &cfg, &common.out),
        None => run_pipeline(&cfg, &common.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
