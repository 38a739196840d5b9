//! Sequence-level similarity and retrieval over frame-embedding sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: embedding sequences, labelled datasets and their on-disk format.
//! - [`ot`]: entropic optimal transport (log-domain Sinkhorn), the resulting
//!   sequence distance, balanced code assignment and an exact LP oracle for
//!   small instances.
//! - [`tcc`]: temporal-cycle-consistency distance built on soft nearest
//!   neighbours.
//! - [`retrieval`]: segment a long robot sequence, retrieve the closest play
//!   snippet per segment, compose the imagined demonstration and score it.
//! - [`losses`]: scalar evaluators for the alignment objectives.
//! - [`synthgen`]: seeded synthetic cross-embodiment benchmarks.

pub mod data;
pub mod losses;
pub mod matrix;
pub mod ot;
pub mod retrieval;
pub mod synthgen;
pub mod tcc;

pub use data::{EmbeddingSequence, Embodiment, FrameLabel, LabeledSequence, SnippetDatabase, TaskId};
pub use matrix::Matrix;
