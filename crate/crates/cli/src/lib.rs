//! `saesim` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 degenerate analysis.

pub mod commands;
pub mod config;
pub mod heatmap;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

/// Environment variable naming the default lexicon file.
pub const LEXICON_ENV: &str = "SAESIM_LEXICON";

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;

/// 3 when the root cause is a degenerate analysis, otherwise 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<saesim_core::Error>())
        .map_or(EXIT_INPUT, |e| {
            if e.is_degenerate() {
                EXIT_DEGENERATE
            } else {
                EXIT_INPUT
            }
        })
}

#[derive(Debug, Parser)]
#[command(
    name = "saesim",
    version,
    about = "Compare SAE feature spaces across models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pair two spaces, filter, score and test against shuffled pairings.
    Score(ScoreArgs),
    /// Score every (layer_a, layer_b) pair listed in a manifest.
    Sweep(SweepArgs),
    /// Semantic-subspace Tests 1 and 2 per lexicon category.
    Subspace(SubspaceArgs),
    /// Write a seeded fixture bundle with known ground truth.
    Synthetic(SyntheticArgs),
    /// Lint matrix, token-table, lexicon, manifest and report files.
    Validate(ValidateArgs),
}

/// Where the two spaces come from: a bundle/manifest, or explicit files.
#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// Manifest file or bundle directory containing `manifest.toml`.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Layer of model A to use from the bundle (default: first listed).
    #[arg(long)]
    pub layer_a: Option<u32>,
    /// Layer of model B to use from the bundle (default: first listed).
    #[arg(long)]
    pub layer_b: Option<u32>,
    #[arg(long)]
    pub weights_a: Option<PathBuf>,
    #[arg(long)]
    pub weights_b: Option<PathBuf>,
    #[arg(long)]
    pub acts_a: Option<PathBuf>,
    #[arg(long)]
    pub acts_b: Option<PathBuf>,
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[arg(long, default_value = "a")]
    pub model_a: String,
    #[arg(long, default_value = "b")]
    pub model_b: String,
}

/// Analysis settings shared by `score`, `sweep` and `subspace`.
#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// Key-value (TOML) config file; flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated: svcca, rsa, knn_jaccard, mean_correlation.
    #[arg(long, alias = "metric")]
    pub metrics: Option<String>,
    /// Comma-separated: nonconcept, shared_token, one_to_one, or none.
    #[arg(long)]
    pub filters: Option<String>,
    #[arg(long)]
    pub null_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub variance_retained: Option<f64>,
    #[arg(long)]
    pub svcca_epsilon: Option<f64>,
    /// euclidean or one_minus_pearson.
    #[arg(long)]
    pub rdm_metric: Option<String>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    /// json or csv (default: from the output extension).
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Manifest file or bundle directory.
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also render an SVG heatmap.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SubspaceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Comma-separated lexicon categories (default: all).
    #[arg(long, alias = "categories")]
    pub category: Option<String>,
    /// Lexicon file (default: $SAESIM_LEXICON, then the shipped lexicon).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Test 1 null samples.
    #[arg(long)]
    pub shuffle_samples: Option<usize>,
    /// Test 2 null samples.
    #[arg(long)]
    pub subset_samples: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n_features: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_tokens: usize,
    /// Shared-signal to noise ratio of paired activations ("inf" for none).
    #[arg(long, default_value_t = 3.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long)]
    pub no_rotate: bool,
    #[arg(long)]
    pub no_permute: bool,
    /// Draw model B's weights independently of model A's.
    #[arg(long)]
    pub independent: bool,
    #[arg(long, default_value_t = 0.0)]
    pub stoplist_fraction: f64,
    /// Plant a concept cluster: shared or unrelated.
    #[arg(long)]
    pub cluster: Option<String>,
    #[arg(long, default_value = "Emotions")]
    pub category: String,
    #[arg(long, default_value_t = 40)]
    pub cluster_size: usize,
    /// Use only the first N keywords of the category.
    #[arg(long)]
    pub n_keywords: Option<usize>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Layers per model; only same-index layers are related.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}
