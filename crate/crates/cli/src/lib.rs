//! Command-line pipeline: encode → cluster → evaluate → report, with each
//! stage reading and writing files in the output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Context;
use config::{BackendKind, DatasetFormat, Mode, Overrides, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "relcluster", version, about = "Unsupervised relation clustering with prompt embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render prompts and write the embedding cache.
    Encode(Flags),
    /// Cluster cached embeddings.
    Cluster(Flags),
    /// Estimate the number of relations with the silhouette elbow rule.
    EstimateK(Flags),
    /// Score an assignment against gold labels.
    Evaluate(Flags),
    /// Confusion matrix, cluster compositions and cluster names.
    Report(Flags),
    /// All stages in sequence.
    Pipeline(Flags),
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<DatasetFormat>,
    /// p, p-empty, p1, p2 or p3.
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Embedding cache to read or write (default: <out>/embeddings.pore).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Assignment to read (default: <out>/assignment.jsonl).
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Accept stage files produced by a different configuration.
    #[arg(long)]
    pub force: bool,
}

impl Flags {
    pub fn context(&self) -> Result<Context, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            dataset: self.dataset.clone(),
            format: self.format,
            template: self.template.clone(),
            backend: self.backend,
            k: self.k,
            mode: self.mode,
            seed: self.seed,
            out: self.out.clone(),
        });
        let mut ctx = Context::new(config)?;
        ctx.force = self.force;
        ctx.cache = self.cache.clone();
        ctx.assignment = self.assignment.clone();
        Ok(ctx)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Encode(f) => commands::cmd_encode(&f.context()?).map(drop),
        Command::Cluster(f) => commands::cmd_cluster(&f.context()?).map(drop),
        Command::EstimateK(f) => commands::cmd_estimate_k(&f.context()?).map(drop),
        Command::Evaluate(f) => commands::cmd_evaluate(&f.context()?).map(drop),
        Command::Report(f) => commands::cmd_report(&f.context()?).map(drop),
        Command::Pipeline(f) => commands::cmd_pipeline(&f.context()?),
    }
}
