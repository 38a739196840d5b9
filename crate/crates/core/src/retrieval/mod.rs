//! Snippet retrieval: segment a robot sequence, fetch the closest play
//! snippet for every segment, and compose the retrieved snippets into an
//! imagined demonstration.

mod eval;
mod imagine;
mod paired;
mod segment;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, EmbeddingSequence};
use crate::ot::{ot_plan, Metric, OtError, SinkhornConfig};
use crate::tcc::{tcc_distance, TccConfig, TccError};

pub use eval::{evaluate, EvalReport, TrajectoryEval, METRIC_LEVEL_NOTE};
pub use imagine::{
    build_paired_dataset, imagine_demo, ImaginedDemo, PairedDataset, PairedEntry, Provenance, SegmentRecord,
};
pub use paired::{read_paired, write_paired, PAIRED_FILE, PAIRED_SEQUENCES_DIR};
pub use segment::segment;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("snippet database is empty")]
    EmptyDatabase,
    #[error("robot set is empty")]
    EmptyRobotSet,
    #[error("robot embedding dimension {robot} does not match database dimension {db}")]
    DimensionMismatch { robot: usize, db: usize },
    #[error("segment {segment}: every candidate distance is NaN")]
    AllDistancesNan { segment: usize },
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("no labels for sequence {0:?}")]
    MissingLabels(String),
    #[error("segment {segment}, snippet {snippet:?}: {source}")]
    Ot {
        segment: usize,
        snippet: String,
        #[source]
        source: OtError,
    },
    #[error("segment {segment}, snippet {snippet:?}: {source}")]
    Tcc {
        segment: usize,
        snippet: String,
        #[source]
        source: TccError,
    },
    #[error("malformed paired dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

/// How a robot sequence is cut into segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segmentation {
    /// Fixed segment length `K` in frames.
    Length(usize),
    /// Segment count `K'`; the length is `K = max(1, floor(T / K'))`.
    Count(usize),
}

/// Treatment of the last window when `K` does not divide `T`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalWindow {
    /// Keep the shorter trailing remainder as its own segment.
    #[default]
    Remainder,
    /// Use a full-length window `[T-K, T)` that overlaps the previous one.
    Overlap,
}

/// Sequence distance used to rank snippets against a robot segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum DistanceConfig {
    Ot {
        #[serde(flatten)]
        sinkhorn: SinkhornConfig,
    },
    Tcc {
        #[serde(flatten)]
        tcc: TccConfig,
    },
}

impl DistanceConfig {
    pub fn ot(sinkhorn: SinkhornConfig) -> Self {
        Self::Ot { sinkhorn }
    }

    pub fn tcc(tcc: TccConfig) -> Self {
        Self::Tcc { tcc }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ot { .. } => "ot",
            Self::Tcc { .. } => "tcc",
        }
    }
}

/// A distance value with the solver status that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    /// False when the OT solver hit its iteration cap.
    pub converged: bool,
}

/// Distance between a robot segment (first argument) and a play snippet.
pub trait SequenceDistance: Sync {
    fn measure(&self, robot: &EmbeddingSequence, snippet: &EmbeddingSequence) -> Result<Measured, DistanceFailure>;
}

/// Solver error raised by a [`SequenceDistance`].
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceFailure {
    Ot(OtError),
    Tcc(TccError),
}

impl SequenceDistance for DistanceConfig {
    fn measure(&self, robot: &EmbeddingSequence, snippet: &EmbeddingSequence) -> Result<Measured, DistanceFailure> {
        match self {
            Self::Ot { sinkhorn } => {
                let plan = ot_plan(robot, snippet, Metric::Cosine, sinkhorn).map_err(DistanceFailure::Ot)?;
                Ok(Measured { value: plan.cost, converged: plan.converged })
            }
            Self::Tcc { tcc } => Ok(Measured {
                value: tcc_distance(robot, snippet, tcc).map_err(DistanceFailure::Tcc)?,
                converged: true,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub segmentation: Segmentation,
    pub distance: DistanceConfig,
    #[serde(default)]
    pub final_window: FinalWindow,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            segmentation: Segmentation::Count(4),
            distance: DistanceConfig::ot(SinkhornConfig::default()),
            final_window: FinalWindow::Remainder,
        }
    }
}

impl RetrievalConfig {
    pub fn with_segmentation(mut self, segmentation: Segmentation) -> Self {
        self.segmentation = segmentation;
        self
    }

    pub fn with_distance(mut self, distance: DistanceConfig) -> Self {
        self.distance = distance;
        self
    }
}
