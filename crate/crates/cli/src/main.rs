//! `hdnn`: desk-scale experiments with highway DNN acoustic models.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hdnn", version, about = "Train and evaluate small-footprint highway DNN acoustic models on synthetic corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (train/cv/adapt splits) from a TOML config
    GenData(GenDataArgs),
    /// Train a network with cross-entropy on the reference alignments
    TrainCe(TrainCeArgs),
    /// Train a student network against a teacher's posteriors
    Distill(DistillArgs),
    /// Add generated denominator lattices to a corpus split
    MakeLattices(MakeLatticesArgs),
    /// Sequence-train a network with sMBR, optionally regularised towards a teacher
    TrainSmbr(TrainSmbrArgs),
    /// Unsupervised per-speaker adaptation.
    ///
    /// "Decoding" here is per-frame argmax over the model's posteriors; there
    /// is no word-level search or language model. Each speaker of the split is
    /// adapted separately on its own frames, and frame error is measured on
    /// the same frames against the reference alignment.
    Adapt(AdaptArgs),
    /// Frame error of a model on a corpus split
    Eval(EvalArgs),
    /// Number of trainable parameters of an architecture
    CountParams(CountParamsArgs),
    /// Write a teacher's posteriors for every utterance of a split
    ExportPosteriors(ExportPosteriorsArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Arch {
    Plain,
    Highway,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Schedule {
    Constant,
    HalveOnCvStall,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Scope {
    All,
    GatesOnly,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Cv,
    Adapt,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AdaptModeArg {
    TwoPassCe,
    OnePassKd,
}

#[derive(Args)]
struct GenDataArgs {
    /// Flat TOML file of generator settings; missing keys take defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config file
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ArchArgs {
    #[arg(long, value_enum, default_value = "highway")]
    arch: Arch,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Hidden layers, counting the input projection
    #[arg(long, default_value_t = 3)]
    layers: usize,
}

#[derive(Args)]
struct OptArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    /// Momentum used from the second epoch on
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    #[arg(long, value_enum)]
    scope: Option<Scope>,
    /// Treat --lr as a per-frame rate (true or false)
    #[arg(long)]
    lr_per_sample: Option<bool>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Epoch reports, one JSON object per line
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write 0 for wall time so reruns produce byte-identical reports
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct TrainCeArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    arch: ArchArgs,
    /// Frames of context on each side when splicing
    #[arg(long, default_value_t = 2)]
    context: usize,
    #[command(flatten)]
    opt: OptArgs,
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    teacher: PathBuf,
    #[command(flatten)]
    arch: ArchArgs,
    /// Weight of the cross-entropy term; 0 gives pure distillation
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Apply the temperature to the teacher only, keeping the student at 1
    #[arg(long)]
    teacher_only_temperature: bool,
    /// Ignore the training labels (requires --q 0)
    #[arg(long)]
    unlabeled: bool,
    /// Directory written by export-posteriors to use instead of running the teacher
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Continue from this student instead of a fresh one
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    opt: OptArgs,
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MakeLatticesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    /// Arcs per frame, the reference arc included
    #[arg(long, default_value_t = 4)]
    branch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainSmbrArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Distillation regulariser; without it --p weights a cross-entropy term
    /// if --ce-smoothing is given
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long)]
    ce_smoothing: bool,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.1)]
    acoustic_scale: f64,
    #[command(flatten)]
    opt: OptArgs,
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "adapt")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "two-pass-ce")]
    mode: AdaptModeArg,
    /// Required for one-pass-kd
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[command(flatten)]
    opt: OptArgs,
    #[arg(long)]
    no_timing: bool,
    /// Receives one model and one report file per speaker
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "cv")]
    split: SplitArg,
}

#[derive(Args)]
struct CountParamsArgs {
    #[arg(long, value_enum)]
    arch: Arch,
    #[arg(long)]
    input: usize,
    #[arg(long)]
    hidden: usize,
    #[arg(long)]
    layers: usize,
    #[arg(long)]
    out: usize,
    /// Print only the gate parameter count
    #[arg(long)]
    gates_only: bool,
}

#[derive(Args)]
struct ExportPosteriorsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
