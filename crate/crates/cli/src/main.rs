mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "pathfuse", version, about = "Multimodal survival and grade models from histology, cell graphs and genomics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort with known risk.
    Synth(SynthArgs),
    /// Build a cell graph from a nuclei label mask.
    GraphBuild(GraphArgs),
    /// Train models per fold and save checkpoints.
    Train(RunArgs),
    /// Predict test folds from saved checkpoints and write metrics.
    Eval(RunArgs),
    /// Integrated gradients and Grad-CAM for one trained fold.
    Attribute(AttributeArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of patients.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    /// Label mask, 16-bit PNG or integer CSV.
    #[arg(long)]
    pub mask: PathBuf,
    /// 8-bit grayscale image of the same size.
    #[arg(long)]
    pub image: PathBuf,
    /// Optional per-nucleus feature CSV (no header, one row per label in ascending order).
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// JSON file with graph settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Edge cutoff in pixels.
    #[arg(long)]
    pub d: Option<f64>,
    /// Output graph JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Cohort manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run configuration JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named starting configuration: paper or desk.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// survival or grade.
    #[arg(long)]
    pub task: Option<String>,
    /// Comma-separated models, e.g. snn,gcn,cnn_gcn_snn.
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Run a single fold.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Folds trained concurrently, capped by PATHFUSE_THREADS.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Run directory for checkpoints and reports.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Gauss-Legendre nodes.
    #[arg(long, default_value_t = 51)]
    pub nodes: usize,
    /// Attribute at most this many test patients.
    #[arg(long)]
    pub limit: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::GraphBuild(a) => commands::graph_build(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Attribute(a) => commands::attribute(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pathfuse: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
