//! Seeded synthetic cross-embodiment benchmarks.
//!
//! Tasks are orthonormal anchor directions. Robot trajectories visit a few
//! tasks in turn, `L` noisy frames each. The demonstrator play bank holds
//! short per-task snippets whose frames drift away from the robot's along
//! a three-step ladder:
//!
//! - easy: a fixed embodiment offset added to every frame;
//! - medium: plus per-task speed changes (snippet length `round(L * speed)`)
//!   and a fixed style rotation;
//! - hard: plus merged snippets where two tasks happen at once.
//!
//! Every frame is unit-normalised and rounded to `f32`, so a generated
//! benchmark is identical before and after a trip through the on-disk format.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{
    DataError, EmbeddingSequence, Embodiment, FrameLabel, LabeledSequence, SnippetDatabase, TaskId, TaskTable,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("embedding dimension d={d} is smaller than n_tasks={n_tasks}; orthonormal anchors need d >= n_tasks")]
    DimensionTooSmall { d: usize, n_tasks: usize },
    #[error("task {task} is out of range for {n_tasks} tasks")]
    InvalidTask { task: TaskId, n_tasks: usize },
    #[error("invalid merge pair ({a}, {b}): {reason}")]
    InvalidMergePair { a: TaskId, b: TaskId, reason: String },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

// Independent RNG streams per generated artefact.
const ANCHOR_STREAM: u64 = 0;
const ROBOT_STREAM: u64 = 1;
const DEMO_STREAM: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    #[default]
    Easy,
    Medium,
    Hard,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Easy, Level::Medium, Level::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Easy => "easy",
            Level::Medium => "medium",
            Level::Hard => "hard",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Level::Easy),
            "medium" => Ok(Level::Medium),
            "hard" => Ok(Level::Hard),
            other => Err(format!("unknown level {other:?} (expected easy, medium or hard)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_tasks: usize,
    pub d: usize,
    /// Frames per task segment, `L`.
    pub segment_len: usize,
    pub trajectories: usize,
    pub tasks_per_trajectory: usize,
    pub snippets_per_task: usize,
    /// Per-dimension noise on robot frames.
    pub robot_sigma: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_tasks: 7,
            d: 32,
            segment_len: 8,
            trajectories: 20,
            tasks_per_trajectory: 4,
            snippets_per_task: 5,
            robot_sigma: 0.05,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_tasks", self.n_tasks),
            ("d", self.d),
            ("segment_len", self.segment_len),
            ("trajectories", self.trajectories),
            ("tasks_per_trajectory", self.tasks_per_trajectory),
            ("snippets_per_task", self.snippets_per_task),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(SynthError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if self.d < self.n_tasks {
            return Err(SynthError::DimensionTooSmall { d: self.d, n_tasks: self.n_tasks });
        }
        if self.tasks_per_trajectory > self.n_tasks {
            return Err(SynthError::InvalidConfig(format!(
                "tasks_per_trajectory={} exceeds n_tasks={}; trajectory tasks are distinct",
                self.tasks_per_trajectory, self.n_tasks
            )));
        }
        check_sigma("robot_sigma", self.robot_sigma)
    }
}

fn check_sigma(name: &str, sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(format!("{name} must be finite and >= 0, got {sigma}")))
    }
}

/// Demonstrator-side mismatch parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSpec {
    pub level: Level,
    /// Norm of the fixed embodiment offset added to every demo frame.
    pub offset_magnitude: f64,
    /// Speed factors cycled over task ids (`speeds[t % len]`); empty means 1.
    pub speeds: Vec<f64>,
    /// Style rotation angle in degrees, applied in `d/2` planes of a random
    /// orthonormal basis.
    pub rotation_deg: f64,
    /// Task pairs performed simultaneously. Tasks in a pair get merged
    /// snippets only.
    pub merge_pairs: Vec<(TaskId, TaskId)>,
    pub sigma: f64,
    pub seed: u64,
}

impl MismatchSpec {
    /// Default ladder parameters for `level`.
    pub fn for_level(level: Level, cfg: &GenConfig) -> Self {
        let medium = level != Level::Easy;
        let merge_pairs = if level == Level::Hard {
            (0..cfg.n_tasks / 2).map(|k| (TaskId(2 * k as u32), TaskId(2 * k as u32 + 1))).collect()
        } else {
            Vec::new()
        };
        Self {
            level,
            offset_magnitude: 0.15,
            speeds: if medium { vec![0.5, 2.0] } else { Vec::new() },
            rotation_deg: if medium { 15.0 } else { 0.0 },
            merge_pairs,
            sigma: 0.05,
            seed: cfg.seed,
        }
    }

    /// No mismatch at all: demo frames follow the anchors exactly.
    pub fn identity(level: Level, seed: u64) -> Self {
        Self {
            level,
            offset_magnitude: 0.0,
            speeds: Vec::new(),
            rotation_deg: 0.0,
            merge_pairs: Vec::new(),
            sigma: 0.0,
            seed,
        }
    }

    pub fn speed(&self, task: TaskId) -> f64 {
        if self.speeds.is_empty() {
            1.0
        } else {
            self.speeds[task.0 as usize % self.speeds.len()]
        }
    }

    /// Snippet length for `task` at segment length `l`.
    pub fn snippet_len(&self, task: TaskId, l: usize) -> usize {
        ((l as f64 * self.speed(task)).round() as usize).max(1)
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        check_sigma("sigma", self.sigma)?;
        if !(self.offset_magnitude >= 0.0 && self.offset_magnitude.is_finite()) {
            return Err(SynthError::InvalidConfig(format!(
                "offset magnitude must be finite and >= 0, got {}",
                self.offset_magnitude
            )));
        }
        if let Some(s) = self.speeds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(SynthError::InvalidConfig(format!("speed factors must be > 0, got {s}")));
        }
        if !self.rotation_deg.is_finite() {
            return Err(SynthError::InvalidConfig("rotation angle must be finite".into()));
        }
        for &(a, b) in &self.merge_pairs {
            for t in [a, b] {
                if t.0 as usize >= n_tasks {
                    return Err(SynthError::InvalidMergePair {
                        a,
                        b,
                        reason: format!("task {t} is out of range for {n_tasks} tasks"),
                    });
                }
            }
            if a == b {
                return Err(SynthError::InvalidMergePair { a, b, reason: "a task cannot merge with itself".into() });
            }
        }
        Ok(())
    }

    fn is_merged(&self, task: TaskId) -> bool {
        self.merge_pairs.iter().any(|&(a, b)| a == task || b == task)
    }
}

/// Mutually orthonormal task directions.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskAnchors {
    d: usize,
    vectors: Vec<Vec<f64>>,
}

impl TaskAnchors {
    pub fn n_tasks(&self) -> usize {
        self.vectors.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn anchor(&self, task: TaskId) -> Result<&[f64]> {
        self.vectors
            .get(task.0 as usize)
            .map(Vec::as_slice)
            .ok_or(SynthError::InvalidTask { task, n_tasks: self.vectors.len() })
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.iter().map(Vec::as_slice)
    }

    /// Task table naming every anchor.
    pub fn task_table(&self) -> TaskTable {
        (0..self.n_tasks() as u32).map(|t| (TaskId(t), format!("task-{t}"))).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Gram-Schmidt over Gaussian draws, projecting twice for stability.
fn orthonormal_set(rng: &mut ChaCha8Rng, count: usize, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, d);
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

pub fn gen_anchors(cfg: &GenConfig) -> Result<TaskAnchors> {
    if cfg.n_tasks == 0 || cfg.d == 0 {
        return Err(SynthError::InvalidConfig("n_tasks and d must be >= 1".into()));
    }
    if cfg.d < cfg.n_tasks {
        return Err(SynthError::DimensionTooSmall { d: cfg.d, n_tasks: cfg.n_tasks });
    }
    let mut rng = rng_for(cfg.seed, ANCHOR_STREAM);
    Ok(TaskAnchors { d: cfg.d, vectors: orthonormal_set(&mut rng, cfg.n_tasks, cfg.d) })
}

/// `normalize(base + offset + sigma * noise)`, rounded to `f32`.
fn noisy_frame(base: &[f64], offset: Option<&[f64]>, sigma: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut v = base.to_vec();
    if let Some(off) = offset {
        v.iter_mut().zip(off).for_each(|(x, o)| *x += o);
    }
    for x in v.iter_mut() {
        *x += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    let n = norm(&v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(SynthError::InvalidConfig("generated frame has zero norm".into()));
    }
    Ok(v.iter().map(|x| (x / n) as f32 as f64).collect())
}

fn check_task(task: TaskId, anchors: &TaskAnchors) -> Result<()> {
    anchors.anchor(task).map(|_| ())
}

/// One robot trajectory: `L` frames per task, labelled with that task.
pub fn gen_robot_trajectory(
    id: impl Into<String>,
    task_seq: &[TaskId],
    anchors: &TaskAnchors,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledSequence> {
    if task_seq.is_empty() {
        return Err(SynthError::InvalidConfig("task sequence is empty".into()));
    }
    if cfg.segment_len == 0 {
        return Err(SynthError::InvalidConfig("segment_len must be >= 1".into()));
    }
    check_sigma("robot_sigma", cfg.robot_sigma)?;
    for &t in task_seq {
        check_task(t, anchors)?;
    }
    let mut frames = Vec::with_capacity(task_seq.len() * cfg.segment_len);
    let mut labels = Vec::with_capacity(frames.capacity());
    for &t in task_seq {
        let a = anchors.anchor(t)?;
        for _ in 0..cfg.segment_len {
            frames.push(noisy_frame(a, None, cfg.robot_sigma, rng)?);
            labels.push(FrameLabel::single(t));
        }
    }
    let seq = EmbeddingSequence::from_frames(&frames)?;
    let tasks: Vec<u32> = task_seq.iter().map(|t| t.0).collect();
    Ok(LabeledSequence::new(id, seq, labels, Embodiment::Robot)?.with_seed(json!({ "tasks": tasks })))
}

/// Rotation by a fixed angle in each plane `(e_2k, e_2k+1)` of an
/// orthonormal basis; every vector in the span turns by exactly that angle
/// when `d` is even.
struct StyleRotation {
    planes: Vec<(Vec<f64>, Vec<f64>)>,
    cos: f64,
    sin: f64,
}

impl StyleRotation {
    fn new(rng: &mut ChaCha8Rng, d: usize, degrees: f64) -> Self {
        let basis = orthonormal_set(rng, d, d);
        let mut it = basis.into_iter();
        let mut planes = Vec::with_capacity(d / 2);
        while let (Some(e1), Some(e2)) = (it.next(), it.next()) {
            planes.push((e1, e2));
        }
        let rad = degrees.to_radians();
        Self { planes, cos: rad.cos(), sin: rad.sin() }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (e1, e2) in &self.planes {
            let (p, q) = (dot(x, e1), dot(x, e2));
            let (dp, dq) = (p * (self.cos - 1.0) - q * self.sin, p * self.sin + q * (self.cos - 1.0));
            for k in 0..y.len() {
                y[k] += dp * e1[k] + dq * e2[k];
            }
        }
        y
    }
}

/// Demonstrator play bank under `spec`.
pub fn gen_demo_snippets(anchors: &TaskAnchors, spec: &MismatchSpec, cfg: &GenConfig) -> Result<SnippetDatabase> {
    spec.validate(anchors.n_tasks())?;
    if cfg.snippets_per_task == 0 || cfg.segment_len == 0 {
        return Err(SynthError::InvalidConfig("snippets_per_task and segment_len must be >= 1".into()));
    }
    let d = anchors.d();
    let mut rng = rng_for(spec.seed, DEMO_STREAM);

    let offset: Vec<f64> = {
        let dir = gaussian(&mut rng, d);
        let n = norm(&dir);
        dir.iter().map(|x| spec.offset_magnitude * x / n).collect()
    };
    let rotation = (spec.rotation_deg != 0.0).then(|| StyleRotation::new(&mut rng, d, spec.rotation_deg));
    let style = |v: Vec<f64>| match &rotation {
        Some(r) => r.apply(&v),
        None => v,
    };

    // (id stem, base direction, label, length)
    let mut kinds: Vec<(String, Vec<f64>, FrameLabel, usize)> = Vec::new();
    for t in (0..anchors.n_tasks() as u32).map(TaskId) {
        if !spec.is_merged(t) {
            kinds.push((
                format!("play-t{t}"),
                style(anchors.anchor(t)?.to_vec()),
                FrameLabel::single(t),
                spec.snippet_len(t, cfg.segment_len),
            ));
        }
    }
    for &(a, b) in &spec.merge_pairs {
        let sum: Vec<f64> = anchors.anchor(a)?.iter().zip(anchors.anchor(b)?).map(|(x, y)| x + y).collect();
        let n = norm(&sum);
        let merged = sum.iter().map(|x| x / n).collect();
        let label = FrameLabel::pair(a, b);
        kinds.push((
            format!("play-m{a}-{b}", a = label.primary(), b = label.secondary().unwrap_or(label.primary())),
            style(merged),
            label,
            spec.snippet_len(a, cfg.segment_len),
        ));
    }

    let mut sequences = Vec::with_capacity(kinds.len() * cfg.snippets_per_task);
    for (stem, base, label, len) in &kinds {
        for k in 0..cfg.snippets_per_task {
            let frames = (0..*len)
                .map(|_| noisy_frame(base, Some(&offset), spec.sigma, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let seq = EmbeddingSequence::from_frames(&frames)?;
            sequences.push(LabeledSequence::new(
                format!("{stem}-{k}"),
                seq,
                vec![*label; *len],
                Embodiment::Demonstrator,
            )?);
        }
    }
    Ok(SnippetDatabase::new(anchors.task_table(), sequences))
}

/// A generated benchmark: the robot trajectory set and the play bank, both
/// carrying the full generation record as provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub anchors: TaskAnchors,
    pub robot: SnippetDatabase,
    pub play: SnippetDatabase,
}

impl Benchmark {
    pub fn robot_set(&self) -> &[LabeledSequence] {
        &self.robot.sequences
    }
}

pub fn gen_benchmark(level: Level, cfg: &GenConfig) -> Result<Benchmark> {
    gen_benchmark_with(cfg, &MismatchSpec::for_level(level, cfg))
}

pub fn gen_benchmark_with(cfg: &GenConfig, spec: &MismatchSpec) -> Result<Benchmark> {
    cfg.validate()?;
    spec.validate(cfg.n_tasks)?;
    let anchors = gen_anchors(cfg)?;
    let provenance = json!({
        "generator": "seqmatch-synthgen",
        "gen_config": cfg,
        "mismatch": spec,
    });

    let mut rng = rng_for(cfg.seed, ROBOT_STREAM);
    let mut robots = Vec::with_capacity(cfg.trajectories);
    for i in 0..cfg.trajectories {
        let tasks: Vec<TaskId> =
            sample(&mut rng, cfg.n_tasks, cfg.tasks_per_trajectory).into_iter().map(|t| TaskId(t as u32)).collect();
        robots.push(gen_robot_trajectory(format!("robot-{i:03}"), &tasks, &anchors, cfg, &mut rng)?);
    }
    let robot = SnippetDatabase::new(anchors.task_table(), robots).with_provenance(provenance.clone());
    let play = gen_demo_snippets(&anchors, spec, cfg)?.with_provenance(provenance);
    Ok(Benchmark { anchors, robot, play })
}
