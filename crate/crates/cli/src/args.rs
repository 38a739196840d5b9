use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqmatch::ot::SinkhornConfig;
use seqmatch::retrieval::{DistanceConfig, FinalWindow, RetrievalConfig, Segmentation};
use seqmatch::synthgen::Level;
use seqmatch::tcc::{FrameLoss, TccConfig};

use crate::error::CliError;

/// Sequence-matching experiments over embedding datasets.
///
/// Log verbosity is read from SEQMATCH_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "seqmatch", version)]
pub struct Cli {
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fail with exit code 4 when any OT solve hits its iteration cap.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic benchmark (robot set and play bank).
    Gen(GenArgs),
    /// Distance grid between robot clips and play snippets, as CSV.
    Dist(DistArgs),
    /// Retrieve and compose an imagined demonstration per robot trajectory.
    Imagine(ImagineArgs),
    /// Score a paired dataset against ground-truth labels.
    Eval(EvalArgs),
    /// Retrieval quality as a function of the segment count K'.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Easy,
    Medium,
    Hard,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Easy => Level::Easy,
            LevelArg::Medium => Level::Medium,
            LevelArg::Hard => Level::Hard,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "easy")]
    pub level: LevelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub n_tasks: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    /// Frames per task segment L.
    #[arg(long, default_value_t = 8)]
    pub segment_len: usize,
    #[arg(long, default_value_t = 20)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 4)]
    pub tasks_per_trajectory: usize,
    #[arg(long, default_value_t = 5)]
    pub snippets_per_task: usize,
    #[arg(long, default_value_t = 0.05)]
    pub robot_sigma: f64,
    /// Demo frame noise (level default when omitted).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Embodiment offset magnitude (level default when omitted).
    #[arg(long)]
    pub offset: Option<f64>,
    /// Style rotation in degrees (level default when omitted).
    #[arg(long)]
    pub rotation: Option<f64>,
    /// Output directory; receives robot/ and play/ datasets.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Ot,
    Tcc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FrameLossArg {
    SquaredL2,
    L2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FinalWindowArg {
    Remainder,
    Overlap,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value = "ot")]
    pub method: MethodArg,
    /// OT entropic regularisation.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// OT marginal tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Run Sinkhorn on kernel scalings instead of log-potentials.
    #[arg(long)]
    pub kernel_domain: bool,
    /// TCC softmax temperature.
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value = "squared-l2")]
    pub tcc_loss: FrameLossArg,
    /// Average TCC over both directions.
    #[arg(long)]
    pub symmetrize: bool,
}

impl MethodArgs {
    pub fn distance(&self) -> Result<DistanceConfig, CliError> {
        match self.method {
            MethodArg::Ot => {
                let cfg = SinkhornConfig {
                    epsilon: self.epsilon,
                    max_iters: self.max_iters,
                    tol_marginal: self.tol,
                    log_domain: !self.kernel_domain,
                };
                cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(DistanceConfig::ot(cfg))
            }
            MethodArg::Tcc => {
                let cfg = TccConfig {
                    temperature: self.temperature,
                    frame_loss: match self.tcc_loss {
                        FrameLossArg::SquaredL2 => FrameLoss::SquaredL2,
                        FrameLossArg::L2 => FrameLoss::L2,
                    },
                    symmetrize: self.symmetrize,
                };
                cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                Ok(DistanceConfig::tcc(cfg))
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Fixed segment length K.
    #[arg(long, conflicts_with = "segment_kprime")]
    pub segment_k: Option<usize>,
    /// Segment count K' (K = max(1, floor(T / K'))).
    #[arg(long)]
    pub segment_kprime: Option<usize>,
    #[arg(long, value_enum, default_value = "remainder")]
    pub final_window: FinalWindowArg,
}

impl SegmentArgs {
    pub fn segmentation(&self) -> Result<Option<Segmentation>, CliError> {
        let s = match (self.segment_k, self.segment_kprime) {
            (Some(k), _) => Some(Segmentation::Length(k)),
            (None, Some(kp)) => Some(Segmentation::Count(kp)),
            (None, None) => None,
        };
        if matches!(s, Some(Segmentation::Length(0) | Segmentation::Count(0))) {
            return Err(CliError::Usage("--segment-k and --segment-kprime must be >= 1".into()));
        }
        Ok(s)
    }

    pub fn final_window(&self) -> FinalWindow {
        match self.final_window {
            FinalWindowArg::Remainder => FinalWindow::Remainder,
            FinalWindowArg::Overlap => FinalWindow::Overlap,
        }
    }

    pub fn retrieval(&self, distance: DistanceConfig) -> Result<RetrievalConfig, CliError> {
        let mut cfg = RetrievalConfig::default().with_distance(distance);
        if let Some(s) = self.segmentation()? {
            cfg = cfg.with_segmentation(s);
        }
        cfg.final_window = self.final_window();
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Dataset whose sequences (or their segments) form the rows.
    #[arg(long)]
    pub robot: PathBuf,
    /// Dataset whose sequences form the columns; defaults to --robot.
    #[arg(long)]
    pub play: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Without a segmentation flag every row is a whole sequence.
    #[command(flatten)]
    pub segments: SegmentArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImagineArgs {
    #[arg(long)]
    pub robot: PathBuf,
    #[arg(long)]
    pub play: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Default segmentation is K' = 4.
    #[command(flatten)]
    pub segments: SegmentArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Paired dataset written by `imagine` (the directory holding paired.json).
    #[arg(long)]
    pub paired: PathBuf,
    /// Play dataset the snippets were retrieved from; supplies snippet labels.
    #[arg(long)]
    pub play: PathBuf,
    /// Robot dataset with ground-truth labels; defaults to the robot
    /// sequences stored in the paired dataset.
    #[arg(long)]
    pub robot: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub robot: PathBuf,
    #[arg(long)]
    pub play: PathBuf,
    /// Comma-separated segment counts, e.g. 1,2,4,8.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub kprime: Vec<usize>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_enum, default_value = "remainder")]
    pub final_window: FinalWindowArg,
    #[arg(long)]
    pub out: PathBuf,
}

impl AblateArgs {
    pub fn final_window(&self) -> FinalWindow {
        match self.final_window {
            FinalWindowArg::Remainder => FinalWindow::Remainder,
            FinalWindowArg::Overlap => FinalWindow::Overlap,
        }
    }
}
