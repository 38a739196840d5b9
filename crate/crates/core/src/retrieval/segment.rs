use std::ops::Range;

use super::{FinalWindow, Result, RetrievalConfig, RetrievalError, Segmentation};

/// Ordered frame ranges covering `[0, len)`.
///
/// Every range has length `K` except possibly the last: with
/// [`FinalWindow::Remainder`] it holds the leftover frames, with
/// [`FinalWindow::Overlap`] it is the full window `[len-K, len)`. A `K`
/// larger than `len` yields the single range `[0, len)`.
pub fn segment(len: usize, cfg: &RetrievalConfig) -> Result<Vec<Range<usize>>> {
    if len == 0 {
        return Err(RetrievalError::InvalidConfig("cannot segment an empty sequence".into()));
    }
    let k = match cfg.segmentation {
        Segmentation::Length(0) => return Err(RetrievalError::InvalidConfig("segment length K must be >= 1".into())),
        Segmentation::Count(0) => return Err(RetrievalError::InvalidConfig("segment count K' must be >= 1".into())),
        Segmentation::Length(k) => k,
        Segmentation::Count(count) => (len / count).max(1),
    };
    if k >= len {
        return Ok(vec![0..len]);
    }
    let mut ranges: Vec<Range<usize>> = (0..len / k).map(|s| s * k..(s + 1) * k).collect();
    if !len.is_multiple_of(k) {
        match cfg.final_window {
            FinalWindow::Remainder => ranges.push(len - len % k..len),
            FinalWindow::Overlap => ranges.push(len - k..len),
        }
    }
    Ok(ranges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(segmentation: Segmentation) -> RetrievalConfig {
        RetrievalConfig::default().with_segmentation(segmentation)
    }

    #[test]
    fn even_split() {
        assert_eq!(segment(10, &cfg(Segmentation::Length(5))).unwrap(), vec![0..5, 5..10]);
        assert_eq!(segment(10, &cfg(Segmentation::Count(2))).unwrap(), vec![0..5, 5..10]);
    }

    #[test]
    fn remainder_kept() {
        assert_eq!(segment(7, &cfg(Segmentation::Length(3))).unwrap(), vec![0..3, 3..6, 6..7]);
    }

    #[test]
    fn overlap_variant() {
        let c = RetrievalConfig { final_window: FinalWindow::Overlap, ..cfg(Segmentation::Length(3)) };
        assert_eq!(segment(7, &c).unwrap(), vec![0..3, 3..6, 4..7]);
    }

    #[test]
    fn oversized_and_degenerate() {
        assert_eq!(segment(4, &cfg(Segmentation::Length(9))).unwrap(), vec![0..4]);
        assert_eq!(segment(4, &cfg(Segmentation::Count(1))).unwrap(), vec![0..4]);
        // K' beyond T clamps K to one frame
        assert_eq!(segment(3, &cfg(Segmentation::Count(8))).unwrap(), vec![0..1, 1..2, 2..3]);
        assert!(segment(4, &cfg(Segmentation::Length(0))).is_err());
        assert!(segment(4, &cfg(Segmentation::Count(0))).is_err());
        assert!(segment(0, &cfg(Segmentation::Count(1))).is_err());
    }
}
