//! `npgnn`: train, evaluate and check NPGNN and VGAE link predictors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use npgnn_core::data::DATA_DIR_ENV;
use npgnn_core::{EncoderActivation, ModelKind, Task};

#[derive(Debug, Parser)]
#[command(name = "npgnn", version, about = "Neural-process GCN link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model on one split and report test AUC / AP.
    Train(TrainArgs),
    /// Repeat training over several seeds and report mean ± standard error.
    Experiment(ExperimentArgs),
    /// Compare analytic and finite-difference gradients on a toy graph.
    Gradcheck(GradcheckArgs),
    /// Write a stochastic block model graph as content / cites files.
    Synth(SynthArgs),
    /// Summarise a dataset or a result file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Transductive,
    Inductive,
    Fewshot,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Transductive => Task::Transductive,
            TaskArg::Inductive => Task::Inductive,
            TaskArg::Fewshot => Task::FewShot,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Npgnn,
    Vgae,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Npgnn => ModelKind::Npgnn,
            ModelArg::Vgae => ModelKind::Vgae,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Linear,
}

impl From<ActivationArg> for EncoderActivation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => EncoderActivation::Relu,
            ActivationArg::Linear => EncoderActivation::Linear,
        }
    }
}

/// Where the graph comes from: a named dataset under the data directory or
/// an explicit pair of files.
#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset name, resolved as `<data-dir>/<name>/<name>.{content,cites}`
    /// or `<data-dir>/<name>.{content,cites}`.
    #[arg(long, required_unless_present = "content", conflicts_with_all = ["content", "cites"])]
    dataset: Option<String>,
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    /// Content file: `<id> <features...> <label>` per line.
    #[arg(long, requires = "cites")]
    content: Option<PathBuf>,
    /// Cites file: `<cited id> <citing id>` per line.
    #[arg(long, requires = "content")]
    cites: Option<PathBuf>,
}

/// Run settings shared by `train` and `experiment`. Flags override the
/// config file, which overrides the built-in defaults.
#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "transductive")]
    task: TaskArg,
    #[arg(long, value_enum, default_value = "npgnn")]
    model: ModelArg,
    /// JSON training configuration; absent keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to the dataset preset, or the config file.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    adam_beta2: Option<f64>,
    /// Encoder output activation; defaults per model.
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    #[arg(long)]
    context_fraction: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Few-shot: share of nodes in the training graph.
    #[arg(long)]
    train_node_fraction: Option<f64>,
    /// Directory receiving the result files.
    #[arg(long, default_value = "npgnn-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of seeds.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    /// Seeds are `first_seed .. first_seed + runs`.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "npgnn")]
    model: ModelArg,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    /// Initialisation seed of the toy parameters.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest accepted relative error per entry.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Use an induced node subgraph as the context.
    #[arg(long)]
    node_context: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 0.5)]
    p_in: f64,
    #[arg(long, default_value_t = 0.02)]
    p_out: f64,
    #[arg(long, default_value_t = 4)]
    features: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base name of the written files.
    #[arg(long, default_value = "sbm")]
    name: String,
    /// Directory receiving `<name>.content` and `<name>.cites`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Dataset name under the data directory.
    #[arg(long, conflicts_with_all = ["content", "result"])]
    dataset: Option<String>,
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, requires = "cites", conflicts_with = "result")]
    content: Option<PathBuf>,
    #[arg(long, requires = "content")]
    cites: Option<PathBuf>,
    /// Result JSON written by `train` or `experiment`.
    #[arg(long, required_unless_present_any = ["dataset", "content"])]
    result: Option<PathBuf>,
}

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
enum Failure {
    /// Inconsistent arguments: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<npgnn_core::Error> for Failure {
    fn from(e: npgnn_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
