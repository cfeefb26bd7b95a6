//! `seedtrack` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seedtrack::segmenter::Adaptation;
use seedtrack::synthetic::Preset;
use seedtrack::tracking::RankingMode;

#[derive(Parser, Debug)]
#[command(name = "seedtrack", version, about = "Seed-based video object segmentation")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a sequence described by a manifest.
    Segment(SegmentArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Render a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Embedding drift curves for a sequence with ground truth.
    Drift(DriftArgs),
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with pipeline settings; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rebuild seed pools every N frames, or `inf` for never.
    #[arg(long)]
    pub adapt_every: Option<Adaptation>,
    #[arg(long)]
    pub ranking: Option<RankingMode>,
    #[arg(long)]
    pub no_crf: bool,
    /// Build seed pools from the manifest's first-frame annotation.
    #[arg(long)]
    pub semi_supervised: bool,
    #[arg(long)]
    pub seed_count: Option<usize>,
    #[arg(long)]
    pub track_stride: Option<usize>,
    /// Also write per-frame foreground probabilities as .npy.
    #[arg(long)]
    pub save_prob: bool,
    /// Score the masks against the manifest's ground truth.
    #[arg(long)]
    pub eval: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted mask PNGs.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth mask PNGs.
    #[arg(long)]
    pub gt: PathBuf,
    /// Where to write scores.csv and scores.json (default: the pred directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Boundary tolerance in pixels (default: 0.8% of the image diagonal).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "clean")]
    pub preset: Preset,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub embedding_dim: usize,
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DriftArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    let result = match cli.command {
        Command::Segment(args) => commands::segment(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Synth(args) => commands::synth(&args),
        Command::Drift(args) => commands::drift(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
