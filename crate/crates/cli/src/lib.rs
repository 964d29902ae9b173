//! `rali` command-line driver: one subcommand per pipeline stage plus the
//! full pipeline, ablations, scoring and inspection.

pub mod commands;
pub mod config;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::CliError;
pub use stages::{run_ablation, run_pipeline, PipelineOutcome, ABLATION_CASES};

#[derive(Debug, Parser)]
#[command(name = "rali", version, about = "Lightweight embedding-based image quality scoring")]
pub struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = config::parse_override)]
    pub overrides: Vec<(String, String)>,

    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: RALI_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Training dataset (.jsonl or RQE1).
    #[arg(long)]
    pub train: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding corpus.
    GenSynth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        text_seeds: Option<usize>,
        /// Extra records written to --test-out.
        #[arg(long)]
        holdout: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        test_out: Option<PathBuf>,
    },
    /// Train the alignment adapter and write an RQA1 file.
    Align {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Use only the first description of each record.
        #[arg(long)]
        no_seed_augmentation: bool,
    },
    /// Fit PCA and write a projection-only RQM1 model.
    Pca {
        #[command(flatten)]
        data: DataArgs,
        /// Adapter to apply before PCA.
        #[arg(long)]
        adapter: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        /// Keep the full dimension (identity projection).
        #[arg(long)]
        skip_pca: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run bucketed k-means on top of a projection model.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        buckets: Option<usize>,
        /// One global k-means ignoring score buckets.
        #[arg(long)]
        plain_kmeans: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune basis vectors and scores against labels.
    Finetune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run align, pca, cluster, finetune and eval, persisting every artifact.
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        skip_align: bool,
        #[arg(long)]
        skip_pca: bool,
        #[arg(long)]
        plain_kmeans: bool,
        #[arg(long)]
        no_seed_augmentation: bool,
        #[arg(long)]
        skip_finetune: bool,
    },
    /// Run the six component ablations and any configured (M, K, N) sweep.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Comma-separated PCA dimensions to sweep.
        #[arg(long)]
        sweep_m: Option<String>,
        /// Comma-separated basis-vector counts to sweep.
        #[arg(long)]
        sweep_k: Option<String>,
        /// Comma-separated bucket counts to sweep.
        #[arg(long)]
        sweep_n: Option<String>,
    },
    /// Score every record of a dataset as JSON lines.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PLCC / SRCC of a model on a labelled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Fit a 4-parameter logistic before PLCC.
        #[arg(long)]
        logistic: bool,
    },
    /// Summarize an RQE1, RQA1, RQM1 or JSONL file.
    Inspect { path: PathBuf },
}
