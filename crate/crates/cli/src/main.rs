mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmcot::train::{GradTarget, Objective, Task};
use lmcot::{CotPath, LogBase, LossConfig};

/// Angular margin losses, toy training, verification metrics and
/// gallery-based face authentication.
#[derive(Debug, Parser)]
#[command(name = "lmcot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned columns for reading.
    Table,
    /// One `key=value` record per line.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Base {
    E,
    #[value(name = "10")]
    Ten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CotRoute {
    Theta,
    Identity,
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    /// Logit scale.
    #[arg(long, default_value_t = LossConfig::default().s)]
    s: f64,
    /// Single margin of the classic losses.
    #[arg(long, default_value_t = LossConfig::default().m)]
    m: f64,
    #[arg(long, default_value_t = LossConfig::default().m1)]
    m1: f64,
    #[arg(long, default_value_t = LossConfig::default().m2)]
    m2: f64,
    #[arg(long, default_value_t = LossConfig::default().m3)]
    m3: f64,
    #[arg(long, default_value_t = LossConfig::default().sigma1)]
    sigma1: f64,
    #[arg(long, default_value_t = LossConfig::default().sigma2)]
    sigma2: f64,
    #[arg(long, default_value_t = LossConfig::default().sigma3)]
    sigma3: f64,
    /// Weight of the cotangent term in the dual loss.
    #[arg(long, default_value_t = LossConfig::default().alpha)]
    alpha: f64,
    /// Weight of the cosine term in the dual loss.
    #[arg(long, default_value_t = LossConfig::default().beta)]
    beta: f64,
    #[arg(long, default_value_t = LossConfig::default().eps)]
    eps: f64,
    #[arg(long, value_enum, default_value = "e")]
    log_base: Base,
    #[arg(long, value_enum, default_value = "theta")]
    cot_path: CotRoute,
}

impl LossArgs {
    fn config(&self, seed: u64) -> LossConfig {
        LossConfig {
            s: self.s,
            m: self.m,
            m1: self.m1,
            m2: self.m2,
            m3: self.m3,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            sigma3: self.sigma3,
            alpha: self.alpha,
            beta: self.beta,
            eps: self.eps,
            log_base: match self.log_base {
                Base::E => LogBase::Natural,
                Base::Ten => LogBase::Ten,
            },
            cot_path: match self.cot_path {
                CotRoute::Theta => CotPath::Theta,
                CotRoute::Identity => CotPath::Identity,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmbedderArgs {
    /// Trained model file; a seed-fixed random network is used otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Width of the default random embedder.
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recompute the two-sample worked example and compare with the
    /// reference values.
    ExampleCheck {
        /// Replace the additive margin of CosFace, ArcFace and LMCot.
        #[arg(long)]
        m: Option<f64>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Loss name, `softmax`, `double`, `margin-ce` or `all`.
        #[arg(long, default_value = "all")]
        loss: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = lmcot::train::DEFAULT_H)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run trials on one thread.
        #[arg(long)]
        sequential: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Train the toy network on synthetic data and write report.txt,
    /// timing.csv and model.txt.
    Train(TrainArgs),
    /// EER, AUC, histograms and a FAR/FRR sweep from a `label,score` file.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long, default_value_t = 101)]
        sweep_points: usize,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// mAP@100 and GAP from a `query,rank,correct,confidence` file.
    RetrievalEval {
        #[arg(long)]
        ranked: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Add face images to a gallery under one identity.
    Enroll {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        name: String,
        /// PGM/PPM face crops.
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value_t = lmcot::pipeline::DEFAULT_EDGE_PIXEL_THRESHOLD)]
        edge_threshold: f64,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Run the authentication sequence on one frame.
    Auth {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        /// Score reported by the stand-in spoof detector.
        #[arg(long, default_value_t = 0.0)]
        spoof_score: f64,
        #[arg(long, default_value_t = lmcot::pipeline::DEFAULT_SPOOF_THRESHOLD)]
        spoof_threshold: f64,
        #[arg(long, default_value_t = lmcot::pipeline::DEFAULT_SIMILARITY_THRESHOLD)]
        similarity_threshold: f64,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "embedding", value_parser = parse_task)]
    task: Task,
    /// Angular loss name, `margin-ce` or `double+margin-ce`.
    #[arg(long, default_value = "lmcot", value_parser = parse_objective)]
    loss: Objective,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Hidden widths, comma separated.
    #[arg(long, default_value = "64,64", value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    /// Classes of the embedding task; binary tasks always use 2.
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    #[arg(long, default_value_t = 0.0)]
    score_margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    loss_args: LossArgs,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: lmcot::Error| e.to_string())
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: lmcot::Error| e.to_string())
}

pub fn parse_grad_targets(s: &str) -> Result<Vec<GradTarget>, lmcot::Error> {
    if s == "all" {
        Ok(GradTarget::all())
    } else {
        Ok(vec![s.parse()?])
    }
}

/// Exit status for each failure class.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const REJECTED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
}

fn status_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<std::io::Error>().is_some() {
        return exit::IO;
    }
    match err.downcast_ref::<lmcot::Error>() {
        Some(lmcot::Error::Io(_) | lmcot::Error::Format(_)) => exit::IO,
        Some(lmcot::Error::Config(_)) => exit::USAGE,
        _ => exit::REJECTED,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ExampleCheck { m, format } => commands::example_check(m, format),
        Command::Gradcheck { loss, trials, h, tol, seed, sequential, format } => {
            commands::gradcheck(&loss, trials, h, tol, seed, sequential, format)
        }
        Command::Train(args) => commands::train(&args),
        Command::Eval { scores, out, bins, sweep_points, format } => {
            commands::eval(&scores, &out, bins, sweep_points, format)
        }
        Command::RetrievalEval { ranked, format } => commands::retrieval_eval(&ranked, format),
        Command::Enroll { gallery, name, images, edge_threshold, embedder } => {
            commands::enroll(&gallery, &name, &images, edge_threshold, &embedder)
        }
        Command::Auth { gallery, frame, spoof_score, spoof_threshold, similarity_threshold, embedder } => {
            commands::auth(&gallery, &frame, spoof_score, spoof_threshold, similarity_threshold, &embedder)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(status_for(&e))
        }
    }
}
