//! Temporal-cycle-consistency distance.
//!
//! For each frame `a_t` of the first ("robot") sequence: take its soft
//! nearest neighbour `b~` in the second sequence, cycle `b~` back to a soft
//! nearest neighbour `a~_t` in the first sequence, and score the discrepancy
//! between `a_t` and `a~_t`. The sequence distance sums the frame losses over
//! `t`. Soft nearest neighbours use `softmax(-||q - k_j||^2 / temperature)`.
//!
//! The distance is not symmetric in its arguments.

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSequence;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TccError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("frame index {index} out of range for a sequence of {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
}

pub type Result<T, E = TccError> = std::result::Result<T, E>;

/// How the cycled-back discrepancy is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameLoss {
    /// `||a_t - a~_t||^2` (not divided by `d`).
    #[default]
    SquaredL2,
    /// `||a_t - a~_t||`.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TccConfig {
    /// Scale of the negative squared distances inside the softmax.
    pub temperature: f64,
    pub frame_loss: FrameLoss,
    /// Average both directions instead of using the first argument as the
    /// robot side. Off by default.
    #[serde(default)]
    pub symmetrize: bool,
}

impl Default for TccConfig {
    fn default() -> Self {
        Self { temperature: 0.1, frame_loss: FrameLoss::SquaredL2, symmetrize: false }
    }
}

impl TccConfig {
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature > 0.0 && self.temperature.is_finite() {
            Ok(())
        } else {
            Err(TccError::InvalidTemperature(self.temperature))
        }
    }
}

/// Both softmax hops for one robot frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTrace {
    pub frame: usize,
    /// Weights over the frames of the second sequence.
    pub alpha: Vec<f64>,
    /// Soft nearest neighbour of `a_t` in the second sequence.
    pub soft_nn: Vec<f64>,
    /// Weights over the frames of the first sequence.
    pub beta: Vec<f64>,
    /// `soft_nn` cycled back into the first sequence.
    pub cycled_back: Vec<f64>,
    pub loss: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(TccError::DimensionMismatch { left, right })
    }
}

/// Softmax of `-||query - key_j||^2 / temperature` over the keys and the
/// weighted key average.
pub fn soft_nearest_neighbor(query: &[f64], keys: &EmbeddingSequence, cfg: &TccConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(query.len(), keys.dim())?;
    cfg.validate()?;
    let logits: Vec<f64> = keys.frames().map(|k| -squared_distance(query, k) / cfg.temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let mut point = vec![0.0; keys.dim()];
    for (w, k) in weights.iter().zip(keys.frames()) {
        for (p, x) in point.iter_mut().zip(k) {
            *p += w * x;
        }
    }
    Ok((weights, point))
}

/// Cycle loss of robot frame `t` of `a` through `b`.
pub fn tcc_frame_loss(
    t: usize,
    a: &EmbeddingSequence,
    b: &EmbeddingSequence,
    cfg: &TccConfig,
) -> Result<(f64, CycleTrace)> {
    if t >= a.len() {
        return Err(TccError::IndexOutOfRange { index: t, len: a.len() });
    }
    check_dims(a.dim(), b.dim())?;
    let anchor = a.frame(t);
    let (alpha, soft_nn) = soft_nearest_neighbor(anchor, b, cfg)?;
    let (beta, cycled_back) = soft_nearest_neighbor(&soft_nn, a, cfg)?;
    let sq = squared_distance(anchor, &cycled_back);
    let loss = match cfg.frame_loss {
        FrameLoss::SquaredL2 => sq,
        FrameLoss::L2 => sq.sqrt(),
    };
    Ok((loss, CycleTrace { frame: t, alpha, soft_nn, beta, cycled_back, loss }))
}

/// Sum of frame cycle losses over the frames of `a`. With `symmetrize`, the
/// mean of both directions.
pub fn tcc_distance(a: &EmbeddingSequence, b: &EmbeddingSequence, cfg: &TccConfig) -> Result<f64> {
    let directed = |x: &EmbeddingSequence, y: &EmbeddingSequence| -> Result<f64> {
        (0..x.len()).map(|t| tcc_frame_loss(t, x, y, cfg).map(|(l, _)| l)).sum()
    };
    if cfg.symmetrize {
        Ok(0.5 * (directed(a, b)? + directed(b, a)?))
    } else {
        directed(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq<const D: usize>(frames: &[[f64; D]]) -> EmbeddingSequence {
        EmbeddingSequence::from_frames(frames).unwrap()
    }

    #[test]
    fn single_key_is_its_own_neighbor() {
        let keys = seq(&[[0.3, -0.4]]);
        let (w, p) = soft_nearest_neighbor(&[1.0, 1.0], &keys, &TccConfig::default()).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(p, vec![0.3, -0.4]);
    }

    #[test]
    fn equidistant_keys_split_evenly() {
        let keys = seq(&[[1.0, 0.0], [-1.0, 0.0]]);
        let (w, p) = soft_nearest_neighbor(&[0.0, 1.0], &keys, &TccConfig::default()).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert!(p.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn softmax_values_match_direct_formula() {
        let keys = seq(&[[1.0, 0.0], [0.0, 1.0]]);
        let cfg = TccConfig::default().with_temperature(1.0);
        let (w, p) = soft_nearest_neighbor(&[1.0, 0.0], &keys, &cfg).unwrap();
        // softmax(0, -2)
        let e = (-2.0f64).exp();
        let want = [1.0 / (1.0 + e), e / (1.0 + e)];
        assert!((w[0] - want[0]).abs() < 1e-15 && (w[1] - want[1]).abs() < 1e-15);
        assert!((w[0] - 0.8808).abs() < 1e-4);
        assert!((p[0] - want[0]).abs() < 1e-15 && (p[1] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn single_frame_cycle_is_exact() {
        let a = seq(&[[0.6, 0.8]]);
        let (loss, trace) = tcc_frame_loss(0, &a, &a, &TccConfig::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(trace.alpha, vec![1.0]);
        assert_eq!(tcc_distance(&a, &a, &TccConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_frames_hard_limit() {
        let a = seq(&[[1.0, 0.0], [-1.0, 0.0]]);
        let cfg = TccConfig::default().with_temperature(0.01);
        for t in 0..2 {
            let (loss, _) = tcc_frame_loss(t, &a, &a, &cfg).unwrap();
            assert!(loss < 1e-12, "{loss}");
        }
    }

    #[test]
    fn cycle_through_diagonal_frame() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = seq(&[[1.0, 0.0], [0.0, 1.0]]);
        let b = seq(&[[h, h]]);
        let (loss, trace) = tcc_frame_loss(0, &a, &b, &TccConfig::default()).unwrap();
        assert_eq!(trace.soft_nn, vec![h, h]);
        assert!((trace.beta[0] - 0.5).abs() < 1e-12);
        assert!((trace.cycled_back[0] - 0.5).abs() < 1e-12);
        // ||(1,0) - (0.5,0.5)||^2
        assert!((loss - 0.5).abs() < 1e-12);
        let unsquared = TccConfig { frame_loss: FrameLoss::L2, ..Default::default() };
        let (l2, _) = tcc_frame_loss(0, &a, &b, &unsquared).unwrap();
        assert!((l2 - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn merged_clip_has_mismatched_cycles() {
        // robot: 3 frames of A then 3 of B; clip: 3 frames of (A+B)/|A+B|
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = seq(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]);
        let b = seq(&[[h, h], [h, h], [h, h]]);
        let cfg = TccConfig::default();
        for t in 0..a.len() {
            let (loss, _) = tcc_frame_loss(t, &a, &b, &cfg).unwrap();
            assert!(loss > 0.1, "frame {t}: {loss}");
        }
    }

    #[test]
    fn weights_are_normalized() {
        let a = seq(&[[0.1, 0.9, 0.3], [1.0, 0.0, 0.2], [0.5, 0.5, 0.5], [-0.2, 0.4, 0.9]]);
        let b = seq(&[[0.9, 0.1, 0.0], [0.2, 0.3, 1.0]]);
        for t in 0..a.len() {
            let (_, trace) = tcc_frame_loss(t, &a, &b, &TccConfig::default()).unwrap();
            assert!((trace.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((trace.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(trace.loss >= 0.0);
        }
    }

    #[test]
    fn asymmetric_in_general() {
        let a = seq(&[[1.0, 0.0], [0.0, 1.0]]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let b = seq(&[[h, h]]);
        let cfg = TccConfig::default();
        let ab = tcc_distance(&a, &b, &cfg).unwrap();
        let ba = tcc_distance(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() > 0.1);
        let sym = TccConfig { symmetrize: true, ..cfg };
        assert!((tcc_distance(&a, &b, &sym).unwrap() - 0.5 * (ab + ba)).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let a = seq(&[[1.0, 0.0]]);
        let b = seq(&[[1.0, 0.0, 0.0]]);
        assert!(matches!(tcc_frame_loss(1, &a, &a, &TccConfig::default()), Err(TccError::IndexOutOfRange { .. })));
        assert!(matches!(tcc_distance(&a, &b, &TccConfig::default()), Err(TccError::DimensionMismatch { .. })));
        assert!(matches!(
            tcc_distance(&a, &a, &TccConfig::default().with_temperature(0.0)),
            Err(TccError::InvalidTemperature(_))
        ));
    }
}
