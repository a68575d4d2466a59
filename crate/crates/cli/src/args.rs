//! Command-line surface. Every value flag is optional so a config file (or
//! a previous run's manifest) can supply it; see `resolve`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "causal-cpd",
    version,
    about = "Change point detection in causal mechanisms of discrete multivariate time series",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    /// Config file (TOML key-per-flag, or a previous run's manifest JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 picks the machine default. Falls back to
    /// CAUSAL_CPD_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print machine-readable JSON instead of human tables.
    #[arg(long, global = true)]
    pub json: bool,
    /// Base RNG seed for the randomized subcommands; deterministic
    /// subcommands record and ignore it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic mechanism-shift dataset with ground truth.
    Generate(GenerateArgs),
    /// Estimate the superset parent graph of a dataset.
    Discover(DiscoverArgs),
    /// Run the full change point detection pipeline.
    Detect(DetectArgs),
    /// Compute divergence series over dumped segments.
    Pe(PeArgs),
    /// Run a trial batch and score methods against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory for data.csv, sidecar, spec, and truth.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of components.
    #[arg(long)]
    pub n: Option<usize>,
    /// Series length.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub tau_max: Option<usize>,
    /// Union parent set size of every component.
    #[arg(long)]
    pub spa: Option<usize>,
    /// soft (same parents, new tables) or hard (parents change).
    #[arg(long)]
    pub kind: Option<String>,
    /// Minimum distance of change points from both series ends.
    #[arg(long)]
    pub margin: Option<usize>,
    #[arg(long)]
    pub min_divergence: Option<f64>,
    #[arg(long)]
    pub min_influence: Option<f64>,
    /// Comma-separated domain symbols, e.g. "0,1".
    #[arg(long)]
    pub domain: Option<String>,
    /// Where to write the specification JSON (default <out>/spec.json).
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiscoverArgs {
    /// Input CSV: one row per time step, one column per component.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// JSON sidecar declaring domain and component names.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
    /// The first CSV column holds time labels.
    #[arg(long)]
    pub time_labels: bool,
    #[arg(long)]
    pub tau_ub: Option<usize>,
    /// Significance level of the conditional-independence tests.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n_intervals: Option<usize>,
    #[arg(long)]
    pub pc_max_conds: Option<usize>,
    #[arg(long)]
    pub min_effect: Option<f64>,
    /// Output JSON path for the parent graph.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DetectArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub time_labels: bool,
    #[arg(long)]
    pub tau_ub: Option<usize>,
    /// Significance level of the discovery tests.
    #[arg(long)]
    pub ci_alpha: Option<f64>,
    #[arg(long)]
    pub n_intervals: Option<usize>,
    #[arg(long)]
    pub pc_max_conds: Option<usize>,
    #[arg(long)]
    pub min_effect: Option<f64>,
    /// Relative divergence mixing parameter.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Samples per half window.
    #[arg(long)]
    pub nw: Option<usize>,
    /// Window stride.
    #[arg(long)]
    pub nst: Option<usize>,
    /// plugin or kernel.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_centers: Option<usize>,
    /// Cross-validate the kernel width and ridge strength.
    #[arg(long)]
    pub cv: bool,
    #[arg(long)]
    pub min_segment_length: Option<usize>,
    /// Inject a known parent graph (JSON from `discover`), skipping
    /// discovery.
    #[arg(long)]
    pub parents: Option<PathBuf>,
    /// Prune parent sets on both sides of the detected split.
    #[arg(long)]
    pub refine: bool,
    /// Peaks at or below this score are flagged as not significant.
    #[arg(long)]
    pub peak_threshold: Option<f64>,
    /// Write one CSV per segment into this directory.
    #[arg(long)]
    pub dump_segments: Option<PathBuf>,
    /// Output JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional plain-text table path.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args)]
pub struct PeArgs {
    /// Directory of segment_*.csv files (from detect --dump-segments).
    #[arg(long)]
    pub segment_dump: Option<PathBuf>,
    /// Output directory (defaults to the dump directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub nw: Option<usize>,
    #[arg(long)]
    pub nst: Option<usize>,
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_centers: Option<usize>,
    #[arg(long)]
    pub cv: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Output directory for the metric artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub tau_max: Option<usize>,
    #[arg(long)]
    pub spa: Option<usize>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub margin: Option<usize>,
    #[arg(long)]
    pub min_divergence: Option<f64>,
    #[arg(long)]
    pub min_influence: Option<f64>,
    /// Comma-separated accuracy interval half-lengths, e.g. "10,25,50".
    #[arg(long)]
    pub q: Option<String>,
    /// Comma-separated methods: causal, mean_change, oracle.
    #[arg(long)]
    pub methods: Option<String>,
    /// Label stamped on every report row.
    #[arg(long)]
    pub setting: Option<String>,
    #[arg(long)]
    pub tau_ub: Option<usize>,
    #[arg(long)]
    pub ci_alpha: Option<f64>,
    #[arg(long)]
    pub n_intervals: Option<usize>,
    #[arg(long)]
    pub pc_max_conds: Option<usize>,
    #[arg(long)]
    pub min_effect: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub nw: Option<usize>,
    #[arg(long)]
    pub nst: Option<usize>,
}
