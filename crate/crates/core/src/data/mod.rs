//! Embedding sequences, frame labels and labelled datasets.
//!
//! Embeddings are held as `f64` in memory and stored as little-endian `f32`
//! on disk (see [`io`]). Values produced by [`EmbeddingSequence::quantized`]
//! survive a write/read cycle bit-for-bit.

mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

pub use io::{dataset_digest, read_dataset, write_dataset, BLOB_EXTENSION, MANIFEST_FILE, SCHEMA_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("embedding sequence must have at least one frame and one dimension (got T={frames}, d={dim})")]
    EmptySequence { frames: usize, dim: usize },
    #[error("frame {frame} has dimension {got}, expected {expected}")]
    RaggedFrames { frame: usize, got: usize, expected: usize },
    #[error("non-finite value at frame {frame}, dim {dim}{}", seq_suffix(.sequence))]
    NonFinite { sequence: Option<String>, frame: usize, dim: usize },
    #[error("sequence {sequence:?} has {labels} labels but {frames} frames")]
    LabelLength { sequence: String, labels: usize, frames: usize },
    #[error("sequence {sequence:?} frame {frame}: a frame carries 1 or 2 task ids, got {got}")]
    LabelArity { sequence: String, frame: usize, got: usize },
    #[error("sequence {sequence:?} frame {frame}: task id {task} is not in the task table")]
    UnknownTask { sequence: String, frame: usize, task: TaskId },
    #[error("sequence {sequence:?} has dimension {got}, dataset dimension is {expected}")]
    DimensionMismatch { sequence: String, got: usize, expected: usize },
    #[error("duplicate sequence id {0:?}")]
    DuplicateId(String),
    #[error("invalid sequence id {0:?}: ids must be non-empty and use only [A-Za-z0-9._-]")]
    InvalidId(String),
    #[error("dataset contains no sequences")]
    EmptyDataset,
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("sequence {sequence:?}: blob {blob} is missing")]
    MissingBlob { sequence: String, blob: String },
    #[error("sequence {sequence:?}: blob {blob} has {actual} bytes, expected {expected} (T*d*4)")]
    BlobSize { sequence: String, blob: String, expected: u64, actual: u64 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn seq_suffix(sequence: &Option<String>) -> String {
    match sequence {
        Some(id) => format!(" in sequence {id:?}"),
        None => String::new(),
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// A `T x d` sequence of frame embeddings, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct EmbeddingSequence {
    len: usize,
    dim: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    frames: Vec<Vec<f64>>,
}

impl TryFrom<RawSequence> for EmbeddingSequence {
    type Error = DataError;

    fn try_from(raw: RawSequence) -> Result<Self> {
        Self::from_frames(&raw.frames)
    }
}

impl From<EmbeddingSequence> for RawSequence {
    fn from(seq: EmbeddingSequence) -> Self {
        RawSequence { frames: seq.frames().map(<[f64]>::to_vec).collect() }
    }
}

impl EmbeddingSequence {
    /// Builds a sequence from row-major data with `len` frames of `dim` values.
    pub fn from_flat(len: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if len == 0 || dim == 0 {
            return Err(DataError::EmptySequence { frames: len, dim });
        }
        if data.len() != len * dim {
            return Err(DataError::RaggedFrames { frame: data.len() / dim, got: data.len() % dim, expected: dim });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { sequence: None, frame: pos / dim, dim: pos % dim });
        }
        Ok(Self { len, dim, data })
    }

    pub fn from_frames<F: AsRef<[f64]>>(frames: &[F]) -> Result<Self> {
        let dim = frames.first().map_or(0, |f| f.as_ref().len());
        let mut data = Vec::with_capacity(frames.len() * dim);
        for (i, f) in frames.iter().enumerate() {
            let f = f.as_ref();
            if f.len() != dim {
                return Err(DataError::RaggedFrames { frame: i, got: f.len(), expected: dim });
            }
            data.extend_from_slice(f);
        }
        Self::from_flat(frames.len(), dim, data)
    }

    /// Frame count `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: a sequence holds at least one frame.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Embedding dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copies frames `range` into a new sequence. Panics on an empty or
    /// out-of-bounds range.
    pub fn slice(&self, range: Range<usize>) -> Self {
        assert!(range.start < range.end && range.end <= self.len, "bad frame range {range:?}");
        Self { len: range.len(), dim: self.dim, data: self.data[range.start * self.dim..range.end * self.dim].to_vec() }
    }

    /// Reorders frames: frame `t` of the result is frame `order[t]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len);
        let mut data = Vec::with_capacity(self.data.len());
        for &t in order {
            data.extend_from_slice(self.frame(t));
        }
        Self { len: self.len, dim: self.dim, data }
    }

    /// Concatenates sequences of a common dimension.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a EmbeddingSequence>) -> Result<Self> {
        let mut dim = 0;
        let mut data = Vec::new();
        for p in parts {
            if dim == 0 {
                dim = p.dim;
            } else if p.dim != dim {
                return Err(DataError::RaggedFrames { frame: data.len() / dim, got: p.dim, expected: dim });
            }
            data.extend_from_slice(&p.data);
        }
        let len = if dim == 0 { 0 } else { data.len() / dim };
        Self::from_flat(len, dim, data)
    }

    /// Rounds every value to the nearest `f32`, the precision kept on disk.
    pub fn quantized(&self) -> Self {
        Self { len: self.len, dim: self.dim, data: self.data.iter().map(|&v| v as f32 as f64).collect() }
    }

    /// Bitwise equality of every stored value.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.len == other.len
            && self.dim == other.dim
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for EmbeddingSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingSequence")
            .field("T", &self.len)
            .field("d", &self.dim)
            .field("frames", &self.frames().collect::<Vec<_>>())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Ground-truth task id(s) of one frame. A frame showing two tasks executed
/// at once carries both ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameLabel {
    primary: TaskId,
    secondary: Option<TaskId>,
}

impl FrameLabel {
    pub fn single(task: TaskId) -> Self {
        Self { primary: task, secondary: None }
    }

    /// Two simultaneous tasks. Collapses to a single label if `a == b`.
    pub fn pair(a: TaskId, b: TaskId) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Self { primary: lo, secondary: (lo != hi).then_some(hi) }
    }

    /// The lower task id.
    pub fn primary(&self) -> TaskId {
        self.primary
    }

    pub fn secondary(&self) -> Option<TaskId> {
        self.secondary
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        std::iter::once(self.primary).chain(self.secondary)
    }

    pub fn contains(&self, task: TaskId) -> bool {
        self.primary == task || self.secondary == Some(task)
    }

    pub fn is_merged(&self) -> bool {
        self.secondary.is_some()
    }
}

impl Serialize for FrameLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = 1 + usize::from(self.secondary.is_some());
        let mut seq = serializer.serialize_seq(Some(n))?;
        for t in self.tasks() {
            seq.serialize_element(&t)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for FrameLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = FrameLabel;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an array of 1 or 2 task ids")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<FrameLabel, A::Error> {
                let first: TaskId = seq.next_element()?.ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let second: Option<TaskId> = seq.next_element()?;
                if seq.next_element::<TaskId>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(match second {
                    Some(s) => FrameLabel::pair(first, s),
                    None => FrameLabel::single(first),
                })
            }
        }

        deserializer.deserialize_seq(LabelVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Embodiment {
    Robot,
    Demonstrator,
}

/// An embedding sequence with per-frame task labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    pub sequence: EmbeddingSequence,
    pub labels: Vec<FrameLabel>,
    pub embodiment: Embodiment,
    /// Free-form generation record kept alongside the sequence in the manifest.
    pub seed: Option<serde_json::Value>,
}

impl LabeledSequence {
    pub fn new(
        id: impl Into<String>,
        sequence: EmbeddingSequence,
        labels: Vec<FrameLabel>,
        embodiment: Embodiment,
    ) -> Result<Self> {
        let id = id.into();
        if labels.len() != sequence.len() {
            return Err(DataError::LabelLength { sequence: id, labels: labels.len(), frames: sequence.len() });
        }
        Ok(Self { id, sequence, labels, embodiment, seed: None })
    }

    pub fn with_seed(mut self, seed: serde_json::Value) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Distinct task ids over the given frame range.
    pub fn task_set(&self, range: Range<usize>) -> std::collections::BTreeSet<TaskId> {
        self.labels[range].iter().flat_map(|l| l.tasks()).collect()
    }

    /// Distinct task ids over the whole sequence.
    pub fn all_tasks(&self) -> std::collections::BTreeSet<TaskId> {
        self.task_set(0..self.labels.len())
    }

    /// Bit-exact equality including embeddings.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.labels == other.labels
            && self.embodiment == other.embodiment
            && self.seed == other.seed
            && self.sequence.bit_eq(&other.sequence)
    }
}

/// Task id to human-readable name.
pub type TaskTable = BTreeMap<TaskId, String>;

/// A labelled collection of sequences sharing one embedding dimension.
///
/// Used both for the demonstrator play bank and, with robot-embodiment
/// sequences, for the robot trajectory set.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetDatabase {
    pub tasks: TaskTable,
    pub sequences: Vec<LabeledSequence>,
    pub provenance: Option<serde_json::Value>,
}

impl SnippetDatabase {
    pub fn new(tasks: TaskTable, sequences: Vec<LabeledSequence>) -> Self {
        Self { tasks, sequences, provenance: None }
    }

    pub fn with_provenance(mut self, provenance: serde_json::Value) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Common embedding dimension, or `None` for an empty database.
    pub fn dim(&self) -> Option<usize> {
        self.sequences.first().map(|s| s.sequence.dim())
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSequence> {
        self.sequences.iter().find(|s| s.id == id)
    }

    /// Checks every dataset invariant: shared dimension, unique well-formed
    /// ids, label lengths and task references.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim().ok_or(DataError::EmptyDataset)?;
        let mut seen = std::collections::HashSet::new();
        for s in &self.sequences {
            validate_id(&s.id)?;
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId(s.id.clone()));
            }
            if s.sequence.dim() != dim {
                return Err(DataError::DimensionMismatch {
                    sequence: s.id.clone(),
                    got: s.sequence.dim(),
                    expected: dim,
                });
            }
            if s.labels.len() != s.sequence.len() {
                return Err(DataError::LabelLength {
                    sequence: s.id.clone(),
                    labels: s.labels.len(),
                    frames: s.sequence.len(),
                });
            }
            for (frame, label) in s.labels.iter().enumerate() {
                if let Some(task) = label.tasks().find(|t| !self.tasks.contains_key(t)) {
                    return Err(DataError::UnknownTask { sequence: s.id.clone(), frame, task });
                }
            }
        }
        Ok(())
    }

    /// Bit-exact equality of every sequence and of the metadata.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.tasks == other.tasks
            && self.provenance == other.provenance
            && self.sequences.len() == other.sequences.len()
            && self.sequences.iter().zip(&other.sequences).all(|(a, b)| a.bit_eq(b))
    }
}

pub(crate) fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(DataError::InvalidId(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(EmbeddingSequence::from_frames::<Vec<f64>>(&[]), Err(DataError::EmptySequence { .. })));
        assert!(matches!(
            EmbeddingSequence::from_frames(&[vec![1.0, 2.0], vec![3.0]]),
            Err(DataError::RaggedFrames { frame: 1, .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let err = EmbeddingSequence::from_frames(&[[0.0, 1.0], [f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { frame: 1, dim: 0, .. }));
    }

    #[test]
    fn label_pair_is_order_free() {
        assert_eq!(FrameLabel::pair(TaskId(3), TaskId(1)), FrameLabel::pair(TaskId(1), TaskId(3)));
        assert!(!FrameLabel::pair(TaskId(2), TaskId(2)).is_merged());
        let json = serde_json::to_string(&FrameLabel::pair(TaskId(4), TaskId(2))).unwrap();
        assert_eq!(json, "[2,4]");
        let back: FrameLabel = serde_json::from_str("[5]").unwrap();
        assert_eq!(back, FrameLabel::single(TaskId(5)));
        assert!(serde_json::from_str::<FrameLabel>("[]").is_err());
        assert!(serde_json::from_str::<FrameLabel>("[1,2,3]").is_err());
    }

    #[test]
    fn slice_concat_permute() {
        let s = EmbeddingSequence::from_frames(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(s.slice(1..3).frame(0), &[0.0, 1.0]);
        let c = EmbeddingSequence::concat([&s.slice(0..1), &s.slice(2..3)]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.frame(1), &[1.0, 1.0]);
        assert_eq!(s.permuted(&[2, 0, 1]).frame(0), &[1.0, 1.0]);
    }

    #[test]
    fn labeled_sequence_checks_length() {
        let s = EmbeddingSequence::from_frames(&[[1.0]]).unwrap();
        let err = LabeledSequence::new("x", s, vec![], Embodiment::Robot).unwrap_err();
        assert!(matches!(err, DataError::LabelLength { labels: 0, frames: 1, .. }));
    }

    #[test]
    fn ids_must_be_filename_safe() {
        assert!(validate_id("robot-0001").is_ok());
        assert!(validate_id("a/b").is_err());
        assert!(validate_id("..").is_err());
        assert!(validate_id("").is_err());
    }
}
