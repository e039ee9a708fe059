mod commands;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use retouch_core::inpaint::MethodKind;
use retouch_core::pipeline::ParamRange;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "retouch", version, about = "Prompted object removal with adjustable masks and no-reference quality scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Remove an object: detect (or load logits), then run the escalation cascade.
    Run(RunArgs),
    /// Score a grid of (b, t) mask parameters into a CSV.
    Sweep(SweepArgs),
    /// Print NIQE (and BRISQUE/PI when a model is given) for an image or directory.
    Score(ScoreArgs),
    /// Fit a NIQE model from a directory of pristine images.
    TrainNiqe(TrainNiqeArgs),
    /// Fit a BRISQUE model from a labels file.
    TrainBrisque(TrainBrisqueArgs),
    /// Start the HTTP session API.
    Serve(ServeArgs),
    /// Write synthetic scenes and corpora.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// NIQE model file; a model fitted on a synthetic corpus is used when absent.
    #[arg(long)]
    niqe_model: Option<PathBuf>,
    /// BRISQUE model file (enables BRISQUE and PI).
    #[arg(long)]
    brisque_model: Option<PathBuf>,
    /// Seed for synthetic data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SourceArgs {
    #[arg(long)]
    image: PathBuf,
    /// LGT1 logits file matching the image.
    #[arg(long)]
    logits: Option<PathBuf>,
    /// Text prompt for the detector backend.
    #[arg(long)]
    prompt: Option<String>,
    /// Base URL of the backend service; falls back to RETOUCH_BACKEND_URL.
    #[arg(long)]
    backend_url: Option<String>,
    /// fast_marching, exemplar, external or auto.
    #[arg(long, default_value = "auto")]
    method: MethodKind,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    models: ModelArgs,
    /// Logit threshold of the first stage.
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// Buffer radius in pixels of the first stage.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Directory for the outcome (images and outcome.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave wall-clock timings out of the outcome.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    models: ModelArgs,
    /// Buffer range start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    sweep_b: Option<ParamRange>,
    /// Threshold range start:stop:step.
    #[arg(long, allow_hyphen_values = true)]
    sweep_t: Option<ParamRange>,
    /// Fixed threshold when --sweep-t is absent.
    #[arg(long, allow_hyphen_values = true, default_value_t = -10.0)]
    t: f64,
    /// Fixed buffer when --sweep-b is absent.
    #[arg(long, allow_hyphen_values = true, default_value_t = 15.0)]
    b: f64,
    /// CSV destination; written to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Image file or directory of images.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    niqe_model: PathBuf,
    #[arg(long)]
    brisque_model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainNiqeArgs {
    /// Directory of pristine images.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainBrisqueArgs {
    /// CSV of `image,label` rows; relative paths are resolved against the file's directory.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[command(flatten)]
    models: ModelArgs,
    #[arg(long)]
    backend_url: Option<String>,
    /// Directory of built UI assets to serve at /.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of object scenes.
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    /// Number of pristine backgrounds for NIQE training.
    #[arg(long, default_value_t = 0)]
    pristine: usize,
    /// Number of base images for a labelled noise corpus (four levels each).
    #[arg(long, default_value_t = 0)]
    distorted: usize,
    /// Side length in pixels.
    #[arg(long, default_value_t = retouch_core::backends::DEFAULT_SCENE_SIDE)]
    size: usize,
    /// Object label used by the scene prompt.
    #[arg(long, default_value = "cat")]
    label: String,
    #[arg(long, default_value_t = 1.0)]
    object_scale: f64,
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(a) => commands::run(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Score(a) => commands::score(a),
        Command::TrainNiqe(a) => commands::train_niqe(a),
        Command::TrainBrisque(a) => commands::train_brisque(a),
        Command::Serve(a) => commands::serve(a),
        Command::Synth(a) => commands::synth(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
