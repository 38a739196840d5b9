use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{PairedDataset, Result, RetrievalError};
use crate::data::{LabeledSequence, SnippetDatabase, TaskId};

pub const METRIC_LEVEL_NOTE: &str = "metrics are computed at retrieval level: they score which ground-truth \
tasks the imagined demonstration contains, not policy rollouts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEval {
    pub robot_id: String,
    pub robot_tasks: BTreeSet<TaskId>,
    pub retrieved_tasks: BTreeSet<TaskId>,
    pub recall: f64,
    pub imprecision: f64,
    pub segments: usize,
    pub segments_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_level: String,
    pub note: String,
    pub method: String,
    /// Mean over trajectories of `|retrieved ∩ robot| / |robot|`.
    pub task_recall: f64,
    /// Mean over trajectories of `|retrieved \ robot| / |retrieved|`.
    pub task_imprecision: f64,
    /// Fraction of segments whose retrieved snippet has exactly the segment's
    /// ground-truth task set.
    pub top1_accuracy: f64,
    pub segments: usize,
    pub nonconverged_segments: usize,
    pub per_trajectory: Vec<TrajectoryEval>,
}

/// Scores every paired entry against ground-truth labels from `robot_set`
/// and `db`.
pub fn evaluate(paired: &PairedDataset, robot_set: &[LabeledSequence], db: &SnippetDatabase) -> Result<EvalReport> {
    if paired.entries.is_empty() {
        return Err(RetrievalError::EmptyRobotSet);
    }
    let mut per_trajectory = Vec::with_capacity(paired.entries.len());
    let mut segments_total = 0;
    let mut correct_total = 0;
    let mut nonconverged = 0;

    for entry in &paired.entries {
        let robot = robot_set
            .iter()
            .find(|r| r.id == entry.robot.id)
            .ok_or_else(|| RetrievalError::MissingLabels(entry.robot.id.clone()))?;
        let robot_tasks = robot.all_tasks();
        let mut retrieved_tasks = BTreeSet::new();
        let mut segments_correct = 0;
        for seg in &entry.demo.segments {
            let snip = db.get(&seg.snippet_id).ok_or_else(|| RetrievalError::MissingLabels(seg.snippet_id.clone()))?;
            if seg.end > robot.labels.len() {
                return Err(RetrievalError::Malformed(format!(
                    "segment {}..{} exceeds robot sequence {:?} of {} frames",
                    seg.start,
                    seg.end,
                    robot.id,
                    robot.labels.len()
                )));
            }
            let snip_tasks = snip.all_tasks();
            if snip_tasks == robot.task_set(seg.range()) {
                segments_correct += 1;
            }
            retrieved_tasks.extend(snip_tasks);
            nonconverged += usize::from(!seg.converged);
        }
        let hit = retrieved_tasks.intersection(&robot_tasks).count();
        let miss = retrieved_tasks.difference(&robot_tasks).count();
        let recall = hit as f64 / robot_tasks.len() as f64;
        let imprecision = if retrieved_tasks.is_empty() { 0.0 } else { miss as f64 / retrieved_tasks.len() as f64 };
        segments_total += entry.demo.segments.len();
        correct_total += segments_correct;
        per_trajectory.push(TrajectoryEval {
            robot_id: robot.id.clone(),
            robot_tasks,
            retrieved_tasks,
            recall,
            imprecision,
            segments: entry.demo.segments.len(),
            segments_correct,
        });
    }

    let n = per_trajectory.len() as f64;
    Ok(EvalReport {
        metric_level: "retrieval".into(),
        note: METRIC_LEVEL_NOTE.into(),
        method: paired.provenance.config.distance.name().into(),
        task_recall: per_trajectory.iter().map(|t| t.recall).sum::<f64>() / n,
        task_imprecision: per_trajectory.iter().map(|t| t.imprecision).sum::<f64>() / n,
        top1_accuracy: correct_total as f64 / segments_total.max(1) as f64,
        segments: segments_total,
        nonconverged_segments: nonconverged,
        per_trajectory,
    })
}
