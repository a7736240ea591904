//! `ragbind` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ragbind::ldm::ConditioningMode;
use ragbind::retrieval::{QueryMode, Scoring};

/// Retrieval-augmented binder design.
#[derive(Debug, Parser)]
#[command(name = "ragbind", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run everything serially.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a PDB complex, extract the binding site and write JSON.
    Prepare {
        #[arg(long)]
        pdb: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        binder_chains: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        target_chains: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Record id; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value = "protfrag")]
        domain: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write toy complexes as prepared JSON (or raw PDB with --pdb).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: u64,
        #[arg(long, default_value_t = 8)]
        binder_len: usize,
        #[arg(long, default_value_t = 20)]
        site_len: usize,
        #[arg(long)]
        pdb: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train the contrastive VAE.
    TrainVae {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        held_out: Option<PathBuf>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Encode a dataset into a retrieval database.
    BuildDb {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the latent diffusion model.
    TrainLdm {
        /// VAE checkpoint used to encode the data.
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        held_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        conditioning: Option<ConditioningMode>,
        #[command(flatten)]
        common: Common,
    },
    /// Query a database with a key vector or an encoded site.
    Retrieve {
        #[arg(long)]
        db: PathBuf,
        /// JSON key vector, `{"key": [...]}`, a complex or a site graph.
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "topN")]
        mode: QueryMode,
        /// Score against stored site keys (key_key) or binder values (key_value).
        #[arg(long, default_value = "key_key")]
        scoring: Scoring,
        /// VAE checkpoint; needed when the query is a structure.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate binders for one complex or a directory of complexes.
    Generate {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        ldm: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        /// Complex JSON file or directory; each site is a design target.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        binder_len: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        mode: Option<QueryMode>,
        #[arg(long)]
        scoring: Option<Scoring>,
        #[command(flatten)]
        common: Common,
    },
    /// Score generated designs against references.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Alternate region regeneration and contact scoring.
    Redesign {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        ldm: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Designable block ranges, e.g. `0-3,10-14` (end exclusive).
        #[arg(long, value_delimiter = ',', required = true)]
        regions: Vec<String>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long, default_value_t = 2)]
        candidates: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let body = serde_json::json!({ "schema_version": commands::SUMMARY_SCHEMA, "error": e.to_string() });
            println!("{body}");
            ExitCode::from(1)
        }
    }
}
