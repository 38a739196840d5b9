//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.json` and one `<id>.f32` blob per
//! sequence. Blobs are row-major little-endian IEEE-754 binary32 with no
//! header, exactly `T * d * 4` bytes. Labels live in the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    validate_id, DataError, EmbeddingSequence, Embodiment, FrameLabel, LabeledSequence, Result, SnippetDatabase,
    TaskId, TaskTable,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_EXTENSION: &str = "f32";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    d: usize,
    tasks: Vec<TaskEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
    sequences: Vec<SequenceRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: TaskId,
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRecord {
    id: String,
    embodiment: Embodiment,
    #[serde(rename = "T")]
    frames: usize,
    labels: Vec<FrameLabel>,
    blob: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<serde_json::Value>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

fn blob_name(id: &str) -> String {
    format!("{id}.{BLOB_EXTENSION}")
}

/// Writes `db` under `dir`, creating the directory if needed.
///
/// All validation happens before the first byte is written. Values are
/// rounded to `f32`.
pub fn write_dataset(db: &SnippetDatabase, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    db.validate()?;
    let d = db.dim().ok_or(DataError::EmptyDataset)?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        d,
        tasks: db.tasks.iter().map(|(&id, name)| TaskEntry { id, name: name.clone() }).collect(),
        provenance: db.provenance.clone(),
        sequences: db
            .sequences
            .iter()
            .map(|s| SequenceRecord {
                id: s.id.clone(),
                embodiment: s.embodiment,
                frames: s.sequence.len(),
                labels: s.labels.clone(),
                blob: blob_name(&s.id),
                seed: s.seed.clone(),
            })
            .collect(),
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for s in &db.sequences {
        let path = dir.join(blob_name(&s.id));
        let mut bytes = Vec::with_capacity(s.sequence.as_flat().len() * 4);
        for &v in s.sequence.as_flat() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(&path, &bytes).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(&manifest_bytes).map_err(io_err(&path))?;
    Ok(())
}

/// Reads and fully validates a dataset directory.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<SnippetDatabase> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| DataError::Manifest { path: manifest_path.display().to_string(), message: e.to_string() })?;
    let malformed = |message: String| DataError::Manifest { path: manifest_path.display().to_string(), message };
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(malformed(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.d == 0 {
        return Err(malformed("d must be at least 1".into()));
    }

    let mut tasks = TaskTable::new();
    for t in manifest.tasks {
        if tasks.insert(t.id, t.name).is_some() {
            return Err(malformed(format!("duplicate task id {}", t.id)));
        }
    }

    let d = manifest.d;
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for rec in manifest.sequences {
        validate_id(&rec.id)?;
        if rec.blob.contains(['/', '\\']) || rec.blob == ".." || rec.blob.is_empty() {
            return Err(malformed(format!("sequence {:?}: blob {:?} is not a plain file name", rec.id, rec.blob)));
        }
        if rec.frames == 0 {
            return Err(malformed(format!("sequence {:?}: T must be at least 1", rec.id)));
        }
        if rec.labels.len() != rec.frames {
            return Err(DataError::LabelLength { sequence: rec.id, labels: rec.labels.len(), frames: rec.frames });
        }
        let sequence = read_blob(&dir.join(&rec.blob), &rec, d)?;
        sequences.push(LabeledSequence {
            id: rec.id,
            sequence,
            labels: rec.labels,
            embodiment: rec.embodiment,
            seed: rec.seed,
        });
    }

    let db = SnippetDatabase { tasks, sequences, provenance: manifest.provenance };
    db.validate()?;
    Ok(db)
}

fn read_blob(path: &PathBuf, rec: &SequenceRecord, d: usize) -> Result<EmbeddingSequence> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DataError::MissingBlob { sequence: rec.id.clone(), blob: rec.blob.clone() })
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    let expected = (rec.frames * d * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(DataError::BlobSize {
            sequence: rec.id.clone(),
            blob: rec.blob.clone(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut data = Vec::with_capacity(rec.frames * d);
    for (k, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(DataError::NonFinite { sequence: Some(rec.id.clone()), frame: k / d, dim: k % d });
        }
        data.push(f64::from(v));
    }
    EmbeddingSequence::from_flat(rec.frames, d, data)
}

/// SHA-256 over the manifest followed by every blob in manifest order, hex
/// encoded. Stable for identical dataset contents.
pub fn dataset_digest(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| DataError::Manifest { path: manifest_path.display().to_string(), message: e.to_string() })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    for rec in &manifest.sequences {
        let path = dir.join(&rec.blob);
        let blob =
            fs::read(&path).map_err(|_| DataError::MissingBlob { sequence: rec.id.clone(), blob: rec.blob.clone() })?;
        hasher.update(&blob);
    }
    Ok(hex::encode(hasher.finalize()))
}
