use std::cmp::Ordering;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{segment, DistanceFailure, Result, RetrievalConfig, RetrievalError, SequenceDistance};
use crate::data::{EmbeddingSequence, FrameLabel, LabeledSequence, SnippetDatabase, TaskTable};

/// Retrieval outcome for one robot segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    /// Robot frame range `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub snippet_id: String,
    pub snippet_len: usize,
    pub distance: f64,
    pub converged: bool,
    /// Second-best distance minus the best; `None` with a single candidate.
    pub runner_up_margin: Option<f64>,
}

impl SegmentRecord {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Retrieved snippets concatenated in segment order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedDemo {
    pub source_id: String,
    pub composed: EmbeddingSequence,
    /// Labels of the retrieved snippet frames, in composed order.
    pub composed_labels: Vec<FrameLabel>,
    pub segments: Vec<SegmentRecord>,
}

impl ImaginedDemo {
    pub fn nonconverged_segments(&self) -> usize {
        self.segments.iter().filter(|s| !s.converged).count()
    }
}

struct Candidate<'a> {
    id: &'a str,
    index: usize,
    value: f64,
    converged: bool,
}

fn better(a: &Candidate<'_>, b: &Candidate<'_>) -> Ordering {
    a.value.partial_cmp(&b.value).expect("NaN candidates are filtered").then_with(|| a.id.cmp(b.id))
}

fn retrieve<'a, D: SequenceDistance>(
    seg_index: usize,
    robot_segment: &EmbeddingSequence,
    db: &'a SnippetDatabase,
    distance: &D,
) -> Result<(Candidate<'a>, Option<f64>)> {
    let mut best: Option<Candidate<'a>> = None;
    let mut runner_up: Option<f64> = None;
    for (index, snip) in db.sequences.iter().enumerate() {
        let m = distance.measure(robot_segment, &snip.sequence).map_err(|f| match f {
            DistanceFailure::Ot(source) => RetrievalError::Ot { segment: seg_index, snippet: snip.id.clone(), source },
            DistanceFailure::Tcc(source) => {
                RetrievalError::Tcc { segment: seg_index, snippet: snip.id.clone(), source }
            }
        })?;
        if m.value.is_nan() {
            continue;
        }
        let cand = Candidate { id: &snip.id, index, value: m.value, converged: m.converged };
        match &best {
            Some(b) if better(&cand, b) != Ordering::Less => {
                runner_up = Some(runner_up.map_or(cand.value, |r: f64| r.min(cand.value)));
            }
            _ => {
                if let Some(b) = best.replace(cand) {
                    runner_up = Some(runner_up.map_or(b.value, |r: f64| r.min(b.value)));
                }
            }
        }
    }
    let best = best.ok_or(RetrievalError::AllDistancesNan { segment: seg_index })?;
    let margin = runner_up.map(|r| r - best.value);
    Ok((best, margin))
}

fn check_db(z_r: &EmbeddingSequence, db: &SnippetDatabase) -> Result<()> {
    let d = db.dim().ok_or(RetrievalError::EmptyDatabase)?;
    if d != z_r.dim() {
        return Err(RetrievalError::DimensionMismatch { robot: z_r.dim(), db: d });
    }
    Ok(())
}

/// Segments `z_r`, retrieves the closest snippet for every segment (ties go
/// to the lexicographically smallest snippet id) and concatenates the
/// retrieved snippets.
pub fn imagine_demo(z_r: &EmbeddingSequence, db: &SnippetDatabase, cfg: &RetrievalConfig) -> Result<ImaginedDemo> {
    check_db(z_r, db)?;
    let ranges = segment(z_r.len(), cfg)?;
    let picks = ranges
        .par_iter()
        .enumerate()
        .map(|(s, r)| retrieve(s, &z_r.slice(r.clone()), db, &cfg.distance).map(|(c, m)| (r.clone(), c, m)))
        .collect::<Result<Vec<_>>>()?;

    let mut segments = Vec::with_capacity(picks.len());
    let mut composed_labels = Vec::new();
    let mut parts = Vec::with_capacity(picks.len());
    for (range, cand, margin) in picks {
        let snip = &db.sequences[cand.index];
        parts.push(&snip.sequence);
        composed_labels.extend_from_slice(&snip.labels);
        segments.push(SegmentRecord {
            start: range.start,
            end: range.end,
            snippet_id: snip.id.clone(),
            snippet_len: snip.sequence.len(),
            distance: cand.value,
            converged: cand.converged,
            runner_up_margin: margin,
        });
    }
    Ok(ImaginedDemo {
        source_id: String::new(),
        composed: EmbeddingSequence::concat(parts)?,
        composed_labels,
        segments,
    })
}

/// One robot trajectory paired with its imagined demonstration. Downstream
/// hybrid training can condition on either `robot.sequence` or
/// `demo.composed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEntry {
    pub robot: LabeledSequence,
    pub demo: ImaginedDemo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: RetrievalConfig,
    #[serde(default)]
    pub robot_digest: Option<String>,
    #[serde(default)]
    pub play_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub tasks: TaskTable,
    pub entries: Vec<PairedEntry>,
    pub provenance: Provenance,
}

/// Imagines a demonstration for every robot trajectory, in input order.
pub fn build_paired_dataset(
    robot_set: &[LabeledSequence],
    db: &SnippetDatabase,
    cfg: &RetrievalConfig,
) -> Result<PairedDataset> {
    if robot_set.is_empty() {
        return Err(RetrievalError::EmptyRobotSet);
    }
    if db.is_empty() {
        return Err(RetrievalError::EmptyDatabase);
    }
    let entries = robot_set
        .par_iter()
        .map(|robot| {
            let mut demo = imagine_demo(&robot.sequence, db, cfg)?;
            demo.source_id = robot.id.clone();
            Ok(PairedEntry { robot: robot.clone(), demo })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tasks = db.tasks.clone();
    tasks.extend(
        robot_set
            .iter()
            .flat_map(|r| r.labels.iter().flat_map(|l| l.tasks()))
            .filter(|t| !db.tasks.contains_key(t))
            .map(|t| (t, format!("task-{t}"))),
    );
    Ok(PairedDataset { tasks, entries, provenance: Provenance { config: *cfg, robot_digest: None, play_digest: None } })
}
