//! Command-line front end. Every subcommand works on one run directory.

pub mod config;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, GESUBNET, THREADS_ENV};
use stages::Run;

use crate::error::{Error, Result};
use crate::persistence::MANIFEST_FILE;

#[derive(Debug, Parser)]
#[command(name = "subtype-nets", version, about = "Subtype-specific gene network inference")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; overrides `paths.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with planted subtype networks.
    Synth,
    /// Filter, transform and align expression and prior graph.
    Preprocess,
    /// Train the patient autoencoder.
    TrainPatient,
    /// Train the gene graph autoencoder.
    TrainGraph,
    /// Fine-tune the graph encoder per subtype.
    Integrate,
    /// Decode subtype networks from the refined encoders.
    Networks,
    /// Build baseline networks.
    Baseline,
    /// Compute network metrics; with files, evaluate those networks instead.
    Evaluate { files: Vec<PathBuf> },
    /// Gene knockout shift rates.
    Knockout,
    /// Print and write the summary tables.
    Report,
    /// Run every stage.
    All,
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(o) = &self.out {
            cfg.paths.output = o.clone();
        }
        Ok(cfg)
    }
}

fn prepare_fresh(out: &std::path::Path, force: bool) -> Result<()> {
    let Ok(entries) = std::fs::read_dir(out) else {
        return Ok(());
    };
    if entries.count() == 0 {
        return Ok(());
    }
    if !force {
        return Err(Error::Config(format!(
            "{} is not empty; pass --force to replace a previous run",
            out.display()
        )));
    }
    if !out.join(MANIFEST_FILE).exists() {
        return Err(Error::Config(format!(
            "{} is not empty and holds no run manifest; refusing to clear it",
            out.display()
        )));
    }
    std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    if matches!(cli.command, Command::All) {
        cfg.validate()?;
        prepare_fresh(&cfg.paths.output, cli.force)?;
    }
    let mut run = Run::open(cfg, cli.force)?;
    match &cli.command {
        Command::Synth => stages::synth(&mut run),
        Command::Preprocess => stages::preprocess(&mut run),
        Command::TrainPatient => stages::train_patient_stage(&mut run),
        Command::TrainGraph => stages::train_graph_stage(&mut run),
        Command::Integrate => stages::integrate(&mut run),
        Command::Networks => stages::networks(&mut run),
        Command::Baseline => stages::baselines(&mut run),
        Command::Evaluate { files } if files.is_empty() => stages::evaluate(&mut run),
        Command::Evaluate { files } => stages::evaluate_files(&mut run, files),
        Command::Knockout => stages::knockout(&mut run),
        Command::Report => stages::report(&mut run),
        Command::All => stages::all(&mut run),
    }
}
