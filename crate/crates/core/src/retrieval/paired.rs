//! Paired-dataset layout: `paired.json` (segment records and provenance) plus
//! a `sequences/` dataset in the standard format holding, per entry, the
//! robot sequence `<id>.robot` and the composed demo `<id>.imagined`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::imagine::Provenance;
use super::{ImaginedDemo, PairedDataset, PairedEntry, Result, RetrievalError, SegmentRecord};
use crate::data::{read_dataset, write_dataset, DataError, Embodiment, LabeledSequence, SnippetDatabase};

pub const PAIRED_FILE: &str = "paired.json";
pub const PAIRED_SEQUENCES_DIR: &str = "sequences";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairedManifest {
    schema_version: u32,
    provenance: Provenance,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryRecord {
    robot_id: String,
    robot_sequence: String,
    imagined_sequence: String,
    segments: Vec<SegmentRecord>,
}

fn robot_key(id: &str) -> String {
    format!("{id}.robot")
}

fn imagined_key(id: &str) -> String {
    format!("{id}.imagined")
}

pub fn write_paired(paired: &PairedDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut sequences = Vec::with_capacity(2 * paired.entries.len());
    let mut records = Vec::with_capacity(paired.entries.len());
    for e in &paired.entries {
        let mut robot = e.robot.clone();
        robot.id = robot_key(&e.robot.id);
        let imagined = LabeledSequence::new(
            imagined_key(&e.robot.id),
            e.demo.composed.clone(),
            e.demo.composed_labels.clone(),
            Embodiment::Demonstrator,
        )?;
        records.push(EntryRecord {
            robot_id: e.robot.id.clone(),
            robot_sequence: robot.id.clone(),
            imagined_sequence: imagined.id.clone(),
            segments: e.demo.segments.clone(),
        });
        sequences.push(robot);
        sequences.push(imagined);
    }
    let db = SnippetDatabase::new(paired.tasks.clone(), sequences);
    write_dataset(&db, dir.join(PAIRED_SEQUENCES_DIR))?;

    let manifest = PairedManifest { schema_version: 1, provenance: paired.provenance.clone(), entries: records };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("paired manifest serializes");
    bytes.push(b'\n');
    let path = dir.join(PAIRED_FILE);
    fs::write(&path, bytes).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn read_paired(dir: impl AsRef<Path>) -> Result<PairedDataset> {
    let dir = dir.as_ref();
    let path = dir.join(PAIRED_FILE);
    let bytes = fs::read(&path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    let manifest: PairedManifest =
        serde_json::from_slice(&bytes).map_err(|e| RetrievalError::Malformed(format!("{}: {e}", path.display())))?;
    let db = read_dataset(dir.join(PAIRED_SEQUENCES_DIR))?;

    let mut entries = Vec::with_capacity(manifest.entries.len());
    for rec in manifest.entries {
        let find = |key: &str| {
            db.get(key)
                .cloned()
                .ok_or_else(|| RetrievalError::Malformed(format!("sequence {key:?} missing from paired dataset")))
        };
        let mut robot = find(&rec.robot_sequence)?;
        robot.id = rec.robot_id.clone();
        let imagined = find(&rec.imagined_sequence)?;
        let composed_len: usize = rec.segments.iter().map(|s| s.snippet_len).sum();
        if composed_len != imagined.sequence.len() {
            return Err(RetrievalError::Malformed(format!(
                "entry {:?}: segments account for {composed_len} frames, composed demo has {}",
                rec.robot_id,
                imagined.sequence.len()
            )));
        }
        entries.push(PairedEntry {
            robot,
            demo: ImaginedDemo {
                source_id: rec.robot_id,
                composed: imagined.sequence,
                composed_labels: imagined.labels,
                segments: rec.segments,
            },
        });
    }
    Ok(PairedDataset { tasks: db.tasks, entries, provenance: manifest.provenance })
}
