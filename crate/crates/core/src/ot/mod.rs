//! Entropic optimal transport between embedding sequences.
//!
//! Each sequence is treated as a uniform distribution over its frames. The
//! distance between two sequences is the cost `sum_ij C_ij M_ij` of the
//! entropy-regularised transport plan `M` found by Sinkhorn-Knopp, with `C`
//! the pairwise frame cost (cosine distance by default).

mod exact;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSequence;
use crate::matrix::Matrix;

pub use exact::{exact_ot_small, exact_ot_small_with_marginals, EXACT_MAX_CELLS};
pub use sinkhorn::{sinkhorn, sinkhorn_with_marginals, swav_codes, CodeAssignment, SinkhornConfig, TransportPlan};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OtError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("frame {frame} of the {side} sequence has zero norm; cosine cost is undefined")]
    ZeroNorm { side: Side, frame: usize },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
    #[error("marginals do not match the cost shape or do not balance: {0}")]
    BadMarginals(String),
    #[error("invalid Sinkhorn config: {0}")]
    InvalidConfig(String),
    #[error("kernel scaling overflowed at iteration {iteration}; enable log-domain stabilisation")]
    NumericalOverflow { iteration: usize },
    #[error("exact OT oracle supports at most {max} cells, got {rows}x{cols}")]
    InstanceTooLarge { rows: usize, cols: usize, max: usize },
}

pub type Result<T, E = OtError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Frame-level cost used to fill the cost matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `1 - cos(a_i, b_j)`, in `[0, 2]`.
    #[default]
    Cosine,
    /// `||a_i - b_j||^2`.
    SquaredEuclidean,
}

/// Pairwise cost between the frames of two sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Matrix,
    metric: Metric,
}

impl CostMatrix {
    /// Wraps an explicit cost matrix, checking finiteness.
    pub fn new(entries: Matrix, metric: Metric) -> Result<Self> {
        for i in 0..entries.rows() {
            if let Some(j) = entries.row(i).iter().position(|v| !v.is_finite()) {
                return Err(OtError::NonFiniteCost { row: i, col: j });
            }
        }
        Ok(Self { entries, metric })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows), Metric::Cosine)
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn transpose(&self) -> Self {
        Self { entries: self.entries.transpose(), metric: self.metric }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the `T x T'` frame cost matrix between `a` and `b`.
pub fn cost_matrix(a: &EmbeddingSequence, b: &EmbeddingSequence, metric: Metric) -> Result<CostMatrix> {
    if a.dim() != b.dim() {
        return Err(OtError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let entries = match metric {
        Metric::Cosine => {
            let norms = |s: &EmbeddingSequence, side| -> Result<Vec<f64>> {
                s.frames()
                    .enumerate()
                    .map(|(frame, f)| {
                        let n = norm(f);
                        if n > 0.0 {
                            Ok(n)
                        } else {
                            Err(OtError::ZeroNorm { side, frame })
                        }
                    })
                    .collect()
            };
            let na = norms(a, Side::Left)?;
            let nb = norms(b, Side::Right)?;
            Matrix::from_fn(a.len(), b.len(), |i, j| {
                let cos = dot(a.frame(i), b.frame(j)) / (na[i] * nb[j]);
                (1.0 - cos).clamp(0.0, 2.0)
            })
        }
        Metric::SquaredEuclidean => Matrix::from_fn(a.len(), b.len(), |i, j| {
            a.frame(i).iter().zip(b.frame(j)).map(|(x, y)| (x - y) * (x - y)).sum()
        }),
    };
    CostMatrix::new(entries, metric)
}

/// Transport plan between two sequences under `metric`.
pub fn ot_plan(
    a: &EmbeddingSequence,
    b: &EmbeddingSequence,
    metric: Metric,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    sinkhorn(&cost_matrix(a, b, metric)?, cfg)
}

/// Cosine-cost OT distance: the cost of the entropic transport plan.
pub fn ot_distance(a: &EmbeddingSequence, b: &EmbeddingSequence, cfg: &SinkhornConfig) -> Result<f64> {
    Ok(ot_plan(a, b, Metric::Cosine, cfg)?.cost)
}
