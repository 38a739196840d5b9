//! Scalar evaluators for the representation-alignment objectives.
//!
//! These compute loss values only; there is no autodiff. The time-contrastive
//! and task-alignment terms follow the printed ratio form (no logarithm
//! around the softmax ratio) unless [`LossForm::Log`] is selected.

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSequence;
use crate::matrix::Matrix;
use crate::ot::{ot_distance, OtError, SinkhornConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
    #[error("sequence needs at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("need at least 2 index-paired clips, got {robot} robot and {demo} demo clips")]
    BadPairing { robot: usize, demo: usize },
    #[error("code row {row} is not a probability distribution (sum {sum})")]
    NotADistribution { row: usize, sum: f64 },
    #[error("scores and codes shapes differ: {scores:?} vs {codes:?}")]
    ShapeMismatch { scores: (usize, usize), codes: (usize, usize) },
    #[error("frame {0} has zero norm; cosine similarity is undefined")]
    ZeroNorm(usize),
    #[error("loss weight {name} is negative: {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("loss component {name} is not finite: {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T, E = LossError> = std::result::Result<T, E>;

/// Whether a contrastive term sums softmax ratios or their logarithms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossForm {
    /// `-sum ratio`
    #[default]
    Ratio,
    /// `-sum ln(ratio)` (standard InfoNCE)
    Log,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeContrastiveConfig {
    /// Frames with `|t' - t| <= window`, `t' != t` are positives.
    pub window: usize,
    pub temperature: f64,
    pub similarity: Similarity,
    pub form: LossForm,
}

impl Default for TimeContrastiveConfig {
    fn default() -> Self {
        Self { window: 1, temperature: 0.1, similarity: Similarity::Cosine, form: LossForm::Ratio }
    }
}

impl TimeContrastiveConfig {
    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(LossError::InvalidConfig("window must be >= 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LossError::InvalidConfig(format!("temperature must be > 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Pairwise frame similarity matrix of `z`.
pub fn similarity_matrix(z: &EmbeddingSequence, similarity: Similarity) -> Result<Matrix> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    match similarity {
        Similarity::Dot => Ok(Matrix::from_fn(z.len(), z.len(), |i, j| dot(z.frame(i), z.frame(j)))),
        Similarity::Cosine => {
            let norms = z
                .frames()
                .enumerate()
                .map(|(t, f)| {
                    let n = dot(f, f).sqrt();
                    if n > 0.0 {
                        Ok(n)
                    } else {
                        Err(LossError::ZeroNorm(t))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Matrix::from_fn(z.len(), z.len(), |i, j| dot(z.frame(i), z.frame(j)) / (norms[i] * norms[j])))
        }
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Contribution of `logits[k]` against the softmax denominator over
/// `logits`: the ratio itself, or its logarithm.
fn softmax_term(logits: &[f64], k: usize, form: LossForm) -> f64 {
    match form {
        LossForm::Log => logits[k] - log_sum_exp(logits),
        LossForm::Ratio => {
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|v| (v - m).exp()).sum();
            (logits[k] - m).exp() / denom
        }
    }
}

/// Time-contrastive loss over a sequence.
///
/// Anchors without positives contribute nothing; an empty negative set gives a
/// ratio of exactly 1 for each positive.
pub fn time_contrastive_loss(z: &EmbeddingSequence, cfg: &TimeContrastiveConfig) -> Result<f64> {
    if z.len() < 2 {
        return Err(LossError::TooShort(z.len()));
    }
    cfg.validate()?;
    time_contrastive_from_similarities(&similarity_matrix(z, cfg.similarity)?, cfg)
}

/// Time-contrastive loss from a precomputed `T x T` similarity matrix.
pub fn time_contrastive_from_similarities(sim: &Matrix, cfg: &TimeContrastiveConfig) -> Result<f64> {
    cfg.validate()?;
    let n = sim.rows();
    if n < 2 || sim.cols() != n {
        return Err(LossError::TooShort(n));
    }
    let mut total = 0.0;
    let mut negatives = Vec::with_capacity(n);
    for t in 0..n {
        negatives.clear();
        negatives.extend((0..n).filter(|&u| t.abs_diff(u) > cfg.window).map(|u| sim[(t, u)] / cfg.temperature));
        let lo = t.saturating_sub(cfg.window);
        let hi = (t + cfg.window).min(n - 1);
        for p in (lo..=hi).filter(|&p| p != t) {
            negatives.push(sim[(t, p)] / cfg.temperature);
            total += softmax_term(&negatives, negatives.len() - 1, cfg.form);
            negatives.pop();
        }
    }
    Ok(-total)
}

/// Contrastive task-alignment loss over index-paired robot/demo clips, using
/// the OT distance between every robot clip and every demo clip.
pub fn task_alignment_loss(
    robot_clips: &[EmbeddingSequence],
    demo_clips: &[EmbeddingSequence],
    ot_cfg: &SinkhornConfig,
    form: LossForm,
) -> Result<f64> {
    if robot_clips.len() != demo_clips.len() || robot_clips.len() < 2 {
        return Err(LossError::BadPairing { robot: robot_clips.len(), demo: demo_clips.len() });
    }
    let n = robot_clips.len();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            d[(i, j)] = ot_distance(&robot_clips[i], &demo_clips[j], ot_cfg)?;
        }
    }
    task_alignment_from_distances(&d, form)
}

/// Task-alignment loss from an `N x N` distance matrix whose diagonal holds
/// the matched pairs. The ratio form lies in `(-N, 0)`.
pub fn task_alignment_from_distances(d: &Matrix, form: LossForm) -> Result<f64> {
    let n = d.rows();
    if n < 2 || d.cols() != n {
        return Err(LossError::BadPairing { robot: n, demo: d.cols() });
    }
    if let Some(v) = d.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(LossError::NonFinite { name: "distance", value: *v });
    }
    let mut total = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = d.row(i).iter().map(|x| -x).collect();
        total += softmax_term(&logits, i, form);
    }
    Ok(-total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwavLossConfig {
    /// Softmax temperature applied to prototype scores.
    pub temperature: f64,
}

impl Default for SwavLossConfig {
    fn default() -> Self {
        Self { temperature: 0.1 }
    }
}

const DISTRIBUTION_TOL: f64 = 1e-6;

/// Mean over the batch of `-sum_k q_bk ln softmax(scores_b / temperature)_k`.
///
/// Rows of `codes` must be probability distributions; use
/// [`crate::ot::CodeAssignment::targets`] to convert Sinkhorn codes.
pub fn swav_assignment_loss(scores: &Matrix, codes: &Matrix, cfg: &SwavLossConfig) -> Result<f64> {
    if (scores.rows(), scores.cols()) != (codes.rows(), codes.cols()) || scores.rows() == 0 {
        return Err(LossError::ShapeMismatch {
            scores: (scores.rows(), scores.cols()),
            codes: (codes.rows(), codes.cols()),
        });
    }
    if !(cfg.temperature > 0.0 && cfg.temperature.is_finite()) {
        return Err(LossError::InvalidConfig(format!("temperature must be > 0, got {}", cfg.temperature)));
    }
    let mut total = 0.0;
    for b in 0..scores.rows() {
        let q = codes.row(b);
        let sum: f64 = q.iter().sum();
        if q.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(LossError::NotADistribution { row: b, sum });
        }
        let logits: Vec<f64> = scores.row(b).iter().map(|s| s / cfg.temperature).collect();
        let lse = log_sum_exp(&logits);
        total -= q.iter().zip(&logits).filter(|(qk, _)| **qk > 0.0).map(|(qk, l)| qk * (l - lse)).sum::<f64>();
    }
    Ok(total / scores.rows() as f64)
}

/// Swapped-prediction form over two views: each view's scores predict the
/// other view's codes.
pub fn swav_two_view_loss(
    scores_1: &Matrix,
    codes_1: &Matrix,
    scores_2: &Matrix,
    codes_2: &Matrix,
    cfg: &SwavLossConfig,
) -> Result<f64> {
    Ok(swav_assignment_loss(scores_1, codes_2, cfg)? + swav_assignment_loss(scores_2, codes_1, cfg)?)
}

/// Mean Shannon entropy (nats) of the code rows.
pub fn mean_code_entropy(codes: &Matrix) -> f64 {
    let total: f64 =
        (0..codes.rows()).map(|b| -codes.row(b).iter().filter(|q| **q > 0.0).map(|q| q * q.ln()).sum::<f64>()).sum();
    total / codes.rows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_vis: f64,
    pub lambda_temp: f64,
    /// Zero unless paired short-horizon data is available.
    pub lambda_task: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_vis: 1.0, lambda_temp: 1.0, lambda_task: 0.0 }
    }
}

/// Weighted sum of the three alignment terms. A term whose weight is zero is
/// never evaluated.
pub fn combined_loss<V, P, K>(weights: &LossWeights, vis: V, temp: P, task: K) -> Result<f64>
where
    V: FnOnce() -> Result<f64>,
    P: FnOnce() -> Result<f64>,
    K: FnOnce() -> Result<f64>,
{
    for (name, value) in
        [("lambda_vis", weights.lambda_vis), ("lambda_temp", weights.lambda_temp), ("lambda_task", weights.lambda_task)]
    {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(LossError::NegativeWeight { name, value });
        }
    }
    fn term(weight: f64, name: &'static str, f: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if weight == 0.0 {
            return Ok(0.0);
        }
        let value = f()?;
        if !value.is_finite() {
            return Err(LossError::NonFinite { name, value });
        }
        Ok(weight * value)
    }
    Ok(term(weights.lambda_vis, "vis", vis)?
        + term(weights.lambda_temp, "temp", temp)?
        + term(weights.lambda_task, "task", task)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_frames_give_uniform_ratios() {
        let z = EmbeddingSequence::from_frames(&[[0.3, 0.4]; 5]).unwrap();
        let cfg = TimeContrastiveConfig { window: 1, temperature: 0.7, ..Default::default() };
        // every ratio is 1 / (1 + |negatives|)
        let mut want = 0.0;
        for t in 0usize..5 {
            let positives = (0usize..5).filter(|&u| u != t && t.abs_diff(u) <= 1).count();
            let negatives = (0usize..5).filter(|&u| t.abs_diff(u) > 1).count();
            want -= positives as f64 / (1.0 + negatives as f64);
        }
        let got = time_contrastive_loss(&z, &cfg).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn negative_free_anchor_ratio_is_one() {
        let z = EmbeddingSequence::from_frames(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let cfg = TimeContrastiveConfig { window: 2, ..Default::default() };
        // with w=2 no anchor has negatives: 3 anchors x 2 positives
        assert!((time_contrastive_loss(&z, &cfg).unwrap() + 6.0).abs() < 1e-15);
        let cfg1 = TimeContrastiveConfig { window: 1, ..cfg };
        let sim = similarity_matrix(&z, Similarity::Cosine).unwrap();
        // anchor 1 has positives {0, 2} and no negatives: contributes exactly 2
        let full = time_contrastive_from_similarities(&sim, &cfg1).unwrap();
        let ratio = |t: usize, p: usize, n: usize| {
            let e = |x: f64| (x / cfg1.temperature).exp();
            e(sim[(t, p)]) / (e(sim[(t, p)]) + e(sim[(t, n)]))
        };
        let want = -(ratio(0, 1, 2) + 1.0 + 1.0 + ratio(2, 1, 0));
        assert!((full - want).abs() < 1e-14);
    }

    #[test]
    fn time_contrastive_errors() {
        let one = EmbeddingSequence::from_frames(&[[1.0]]).unwrap();
        assert_eq!(time_contrastive_loss(&one, &Default::default()), Err(LossError::TooShort(1)));
        let two = EmbeddingSequence::from_frames(&[[1.0], [2.0]]).unwrap();
        let bad = TimeContrastiveConfig { window: 0, ..Default::default() };
        assert!(matches!(time_contrastive_loss(&two, &bad), Err(LossError::InvalidConfig(_))));
        let zero = EmbeddingSequence::from_frames(&[[1.0], [0.0]]).unwrap();
        assert_eq!(time_contrastive_loss(&zero, &Default::default()), Err(LossError::ZeroNorm(1)));
    }

    #[test]
    fn task_alignment_uniform_distances() {
        for n in [2, 4, 8] {
            let d = Matrix::filled(n, n, 0.37);
            assert_eq!(task_alignment_from_distances(&d, LossForm::Ratio).unwrap(), -1.0);
        }
    }

    #[test]
    fn task_alignment_two_clip_value() {
        let d = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let want = -2.0 / (1.0 + (-1.0f64).exp());
        let got = task_alignment_from_distances(&d, LossForm::Ratio).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got + 1.4621).abs() < 1e-4);
        let log = task_alignment_from_distances(&d, LossForm::Log).unwrap();
        assert!((log + 2.0 * (1.0 / (1.0 + (-1.0f64).exp())).ln()).abs() < 1e-15);
    }

    #[test]
    fn task_alignment_separation_limit() {
        let n = 3;
        let d = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 800.0 });
        assert_eq!(task_alignment_from_distances(&d, LossForm::Ratio).unwrap(), -3.0);
    }

    #[test]
    fn task_alignment_with_ot() {
        let a = EmbeddingSequence::from_frames(&[[1.0, 0.0], [1.0, 0.1]]).unwrap();
        let b = EmbeddingSequence::from_frames(&[[0.0, 1.0], [0.1, 1.0]]).unwrap();
        let cfg = SinkhornConfig::default();
        let matched =
            task_alignment_loss(&[a.clone(), b.clone()], &[a.clone(), b.clone()], &cfg, LossForm::Ratio).unwrap();
        let swapped = task_alignment_loss(&[a.clone(), b.clone()], &[b, a.clone()], &cfg, LossForm::Ratio).unwrap();
        assert!(matched < swapped);
        assert!(matched > -2.0 && matched < 0.0);
        assert!(matches!(
            task_alignment_loss(&[a.clone()], &[a], &cfg, LossForm::Ratio),
            Err(LossError::BadPairing { .. })
        ));
    }

    #[test]
    fn swav_loss_reference_cases() {
        let uniform = Matrix::filled(3, 4, 0.25);
        let flat_scores = Matrix::filled(3, 4, 1.5);
        let l = swav_assignment_loss(&flat_scores, &uniform, &Default::default()).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((l - 1.3863).abs() < 1e-4);

        // one-hot codes on a widely separated argmax
        let scores = Matrix::from_rows(&[[60.0, -60.0], [-60.0, 60.0]]);
        let codes = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(swav_assignment_loss(&scores, &codes, &Default::default()).unwrap() < 1e-300);

        let two = swav_two_view_loss(&flat_scores, &uniform, &flat_scores, &uniform, &Default::default()).unwrap();
        assert!((two - 2.0 * 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn swav_loss_rejects_bad_codes() {
        let scores = Matrix::zeros(2, 2);
        let codes = Matrix::from_rows(&[[0.5, 0.5], [0.4, 0.4]]);
        assert!(matches!(
            swav_assignment_loss(&scores, &codes, &Default::default()),
            Err(LossError::NotADistribution { row: 1, .. })
        ));
        assert!(matches!(
            swav_assignment_loss(&scores, &Matrix::zeros(2, 3), &Default::default()),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn combined_weights() {
        let w = |v, p, k| LossWeights { lambda_vis: v, lambda_temp: p, lambda_task: k };
        assert_eq!(combined_loss(&w(1.0, 0.0, 0.0), || Ok(2.0), || Ok(7.0), || Ok(9.0)).unwrap(), 2.0);
        let got = combined_loss(&w(1.0, 1.0, 0.0), || Ok(0.25), || Ok(1.5), || panic!("task term evaluated")).unwrap();
        assert_eq!(got, 1.75);
        let got = combined_loss(&w(0.5, 0.3, 0.2), || Ok(1.0), || Ok(1.0), || Ok(1.0)).unwrap();
        assert!((got - 1.0).abs() < 1e-15);
        assert!(matches!(
            combined_loss(&w(-1.0, 0.0, 0.0), || Ok(1.0), || Ok(1.0), || Ok(1.0)),
            Err(LossError::NegativeWeight { name: "lambda_vis", .. })
        ));
        assert!(matches!(
            combined_loss(&w(1.0, 0.0, 0.0), || Ok(f64::NAN), || Ok(1.0), || Ok(1.0)),
            Err(LossError::NonFinite { name: "vis", .. })
        ));
    }
}
