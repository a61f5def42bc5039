use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Synthesize navigation paths and test them for data copying.
#[derive(Debug, Parser)]
#[command(name = "pathsynth", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a trace into sections with stable cross-correlation.
    Segment(SegmentArgs),
    /// Generate synthetic realizations of a trace.
    Generate(GenerateArgs),
    /// Run the three-sample test on training, held-out and synthetic traces.
    Evaluate(EvaluateArgs),
    /// Sweep (b, lambda), generating and evaluating at each grid point.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SegmentationFlags {
    /// Time bandwidth of the local CDFs, in samples.
    #[arg(long = "b", env = "PATHSYNTH_B", default_value_t = 10.0)]
    pub b: f64,
    /// Level of the cross-correlation stationarity test.
    #[arg(long, env = "PATHSYNTH_ALPHA", default_value_t = 0.05)]
    pub alpha: f64,
    /// Minimum segment length [default: max(32, n/10)].
    #[arg(long = "min-len", env = "PATHSYNTH_MIN_LEN")]
    pub min_len: Option<usize>,
    #[arg(long, env = "PATHSYNTH_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthesisFlags {
    /// Residual scale in percent.
    #[arg(long, env = "PATHSYNTH_LAMBDA", default_value_t = 100.0, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Jitter half-width on target correlations.
    #[arg(long, env = "PATHSYNTH_DELTA", default_value_t = 0.2)]
    pub delta: f64,
    /// Realizations per source trace.
    #[arg(long = "n", env = "PATHSYNTH_N", default_value_t = 5)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TestFlags {
    /// Window length [default: round(sqrt(n)) clamped to [4, n/4]].
    #[arg(long = "L", env = "PATHSYNTH_L")]
    pub window: Option<usize>,
    /// Window step [default: L/2].
    #[arg(long, env = "PATHSYNTH_STRIDE")]
    pub stride: Option<usize>,
    /// Number of k-means bins [default: max(1, held-out points / 50)].
    #[arg(long, env = "PATHSYNTH_K")]
    pub k: Option<usize>,
    /// Bin retention threshold as a fraction of the per-bin average.
    #[arg(long, env = "PATHSYNTH_TAU", default_value_t = 0.0)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Trace CSV, multi-trace CSV or directory.
    pub trace: PathBuf,
    #[command(flatten)]
    pub seg: SegmentationFlags,
    /// Output JSON file.
    #[arg(long, env = "PATHSYNTH_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub trace: PathBuf,
    #[command(flatten)]
    pub seg: SegmentationFlags,
    #[command(flatten)]
    pub synth: SynthesisFlags,
    /// Output directory.
    #[arg(long, env = "PATHSYNTH_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Training traces (files or directories).
    #[arg(long, required = true, num_args = 1..)]
    pub train: Vec<PathBuf>,
    /// Held-out traces.
    #[arg(long, required = true, num_args = 1..)]
    pub test: Vec<PathBuf>,
    /// Synthetic traces.
    #[arg(long, required = true, num_args = 1..)]
    pub synth: Vec<PathBuf>,
    #[command(flatten)]
    pub test_flags: TestFlags,
    #[arg(long, env = "PATHSYNTH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Split the synthetic traces into this many groups and average C_T.
    #[arg(long, env = "PATHSYNTH_REPEAT")]
    pub repeat: Option<usize>,
    /// Output JSON file.
    #[arg(long, env = "PATHSYNTH_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Source trace. Omit with --demo.
    #[arg(required_unless_present = "demo", conflicts_with = "demo")]
    pub trace: Option<PathBuf>,
    /// Held-out trace similar to the source. Required without --demo.
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    pub similar: Option<PathBuf>,
    /// Use a built-in pursuit-style source and similar trace.
    #[arg(long)]
    pub demo: bool,
    /// Length of the demo traces.
    #[arg(long = "demo-len", env = "PATHSYNTH_DEMO_LEN", default_value_t = 400)]
    pub demo_len: usize,
    /// Comma-separated bandwidths to sweep.
    #[arg(long = "b-values", env = "PATHSYNTH_B_VALUES", value_delimiter = ',', default_value = "2,5,10,20")]
    pub b_values: Vec<f64>,
    /// Comma-separated scales to sweep.
    #[arg(long = "lambda-values", env = "PATHSYNTH_LAMBDA_VALUES", value_delimiter = ',', default_value = "10,50,100,150")]
    pub lambda_values: Vec<f64>,
    /// Jitter half-width on target correlations.
    #[arg(long, env = "PATHSYNTH_DELTA", default_value_t = 0.2)]
    pub delta: f64,
    /// Realizations per grid point.
    #[arg(long = "n", env = "PATHSYNTH_N", default_value_t = 50)]
    pub n: usize,
    #[arg(long, env = "PATHSYNTH_ALPHA", default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "min-len", env = "PATHSYNTH_MIN_LEN")]
    pub min_len: Option<usize>,
    #[arg(long, env = "PATHSYNTH_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub test_flags: TestFlags,
    /// Grid points run at once [default: all cores].
    #[arg(long, env = "PATHSYNTH_JOBS")]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, env = "PATHSYNTH_OUT")]
    pub out: PathBuf,
}
