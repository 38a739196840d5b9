use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use seqmatch::data::{dataset_digest, read_dataset, write_dataset, EmbeddingSequence, SnippetDatabase};
use seqmatch::retrieval::{
    build_paired_dataset, evaluate, read_paired, segment, write_paired, DistanceConfig, DistanceFailure, EvalReport,
    PairedDataset, RetrievalConfig, RetrievalError, Segmentation, SequenceDistance, PAIRED_FILE,
};
use seqmatch::synthgen::{gen_benchmark_with, GenConfig, MismatchSpec};
use serde::Serialize;
use serde_json::json;

use crate::args::{AblateArgs, DistArgs, EvalArgs, GenArgs, ImagineArgs};
use crate::error::CliError;
use crate::manifest::{create_dir, file_digest, write_json, RunRecorder};

pub const DISTANCES_FILE: &str = "distances.csv";
pub const DIST_SUMMARY_FILE: &str = "dist.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const PAIRED_DIR: &str = "paired";

fn load(path: &Path) -> Result<(SnippetDatabase, String), CliError> {
    let db = read_dataset(path)?;
    let digest = dataset_digest(path)?;
    log::info!("loaded {} sequences from {}", db.len(), path.display());
    Ok((db, digest))
}

fn check_dims(robot: &SnippetDatabase, play: &SnippetDatabase) -> Result<(), CliError> {
    match (robot.dim(), play.dim()) {
        (Some(r), Some(p)) if r != p => Err(RetrievalError::DimensionMismatch { robot: r, db: p }.into()),
        _ => Ok(()),
    }
}

fn strict_check(strict: bool, count: usize, total: usize) -> Result<(), CliError> {
    if count > 0 {
        log::warn!("{count} of {total} OT solves hit the iteration cap");
        if strict {
            return Err(CliError::NonConverged { count, total });
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

fn csv_finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<String, CliError> {
    w.flush().map_err(|e| CliError::Csv { path: path.to_path_buf(), source: e.into() })?;
    drop(w);
    file_digest(path)
}

fn csv_row<I, T>(w: &mut csv::Writer<std::fs::File>, path: &Path, row: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let cfg = GenConfig {
        n_tasks: args.n_tasks,
        d: args.d,
        segment_len: args.segment_len,
        trajectories: args.trajectories,
        tasks_per_trajectory: args.tasks_per_trajectory,
        snippets_per_task: args.snippets_per_task,
        robot_sigma: args.robot_sigma,
        seed: args.seed,
    };
    let mut spec = MismatchSpec::for_level(args.level.into(), &cfg);
    if let Some(s) = args.sigma {
        spec.sigma = s;
    }
    if let Some(o) = args.offset {
        spec.offset_magnitude = o;
    }
    if let Some(r) = args.rotation {
        spec.rotation_deg = r;
    }
    let mut run = RunRecorder::start("gen", json!({ "gen_config": cfg, "mismatch": spec }), Some(cfg.seed));
    let bench = gen_benchmark_with(&cfg, &spec)?;

    create_dir(&args.out)?;
    for (name, db) in [("robot", &bench.robot), ("play", &bench.play)] {
        let dir = args.out.join(name);
        write_dataset(db, &dir)?;
        run.output(name, dataset_digest(&dir)?);
    }
    log::info!(
        "wrote {} robot trajectories and {} play snippets to {}",
        bench.robot.len(),
        bench.play.len(),
        args.out.display()
    );
    run.finish(&args.out)
}

#[derive(Serialize)]
struct Cell {
    clip: String,
    snippet: String,
}

pub fn dist(args: &DistArgs, strict: bool) -> Result<(), CliError> {
    let distance = args.method.distance()?;
    let segmentation = args.segments.segmentation()?;
    let final_window = args.segments.final_window();
    let (rows_db, rows_digest) = load(&args.robot)?;
    let (cols_db, cols_digest) = match &args.play {
        Some(p) => load(p)?,
        None => (rows_db.clone(), rows_digest.clone()),
    };
    check_dims(&rows_db, &cols_db)?;

    let mut clips: Vec<(String, EmbeddingSequence)> = Vec::new();
    for s in &rows_db.sequences {
        match segmentation {
            None => clips.push((s.id.clone(), s.sequence.clone())),
            Some(seg) => {
                let cfg = RetrievalConfig { segmentation: seg, distance, final_window };
                for r in segment(s.sequence.len(), &cfg)? {
                    clips.push((format!("{}@{}-{}", s.id, r.start, r.end), s.sequence.slice(r)));
                }
            }
        }
    }

    let grid = clips
        .par_iter()
        .map(|(clip_id, clip)| {
            cols_db
                .sequences
                .iter()
                .map(|snip| {
                    distance.measure(clip, &snip.sequence).map_err(|f| {
                        let context = format!("clip {clip_id} vs snippet {}", snip.id);
                        match f {
                            DistanceFailure::Ot(source) => CliError::Ot { context, source },
                            DistanceFailure::Tcc(source) => CliError::Tcc { context, source },
                        }
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut nonconverged = Vec::new();
    for ((clip_id, _), row) in clips.iter().zip(&grid) {
        for (snip, m) in cols_db.sequences.iter().zip(row) {
            if !m.converged {
                nonconverged.push(Cell { clip: clip_id.clone(), snippet: snip.id.clone() });
            }
        }
    }
    strict_check(strict, nonconverged.len(), clips.len() * cols_db.len())?;

    let config = json!({ "distance": distance, "segmentation": segmentation, "final_window": final_window });
    let mut run = RunRecorder::start("dist", config.clone(), None);
    run.input("robot", &args.robot, rows_digest);
    run.input("play", args.play.as_deref().unwrap_or(&args.robot), cols_digest);

    create_dir(&args.out)?;
    let path = args.out.join(DISTANCES_FILE);
    let mut w = csv_writer(&path)?;
    csv_row(&mut w, &path, std::iter::once("clip").chain(cols_db.sequences.iter().map(|s| s.id.as_str())))?;
    for ((clip_id, _), row) in clips.iter().zip(&grid) {
        let cells = row.iter().map(|m| m.value.to_string());
        csv_row(&mut w, &path, std::iter::once(clip_id.clone()).chain(cells))?;
    }
    run.output(DISTANCES_FILE, csv_finish(w, &path)?);

    let summary = json!({
        "method": distance.name(),
        "config": config,
        "rows": clips.len(),
        "columns": cols_db.len(),
        "nonconverged": nonconverged,
    });
    run.output(DIST_SUMMARY_FILE, write_json(&args.out.join(DIST_SUMMARY_FILE), &summary)?);
    run.finish(&args.out)
}

fn nonconverged(paired: &PairedDataset) -> (usize, usize) {
    paired.entries.iter().fold((0, 0), |(n, t), e| (n + e.demo.nonconverged_segments(), t + e.demo.segments.len()))
}

fn log_report(report: &EvalReport) {
    log::info!(
        "{}: recall {:.4}, imprecision {:.4}, top-1 {:.4} over {} segments",
        report.method,
        report.task_recall,
        report.task_imprecision,
        report.top1_accuracy,
        report.segments
    );
}

pub fn imagine(args: &ImagineArgs, strict: bool) -> Result<(), CliError> {
    let cfg = args.segments.retrieval(args.method.distance()?)?;
    let (robot, robot_digest) = load(&args.robot)?;
    let (play, play_digest) = load(&args.play)?;
    check_dims(&robot, &play)?;

    let mut paired = build_paired_dataset(&robot.sequences, &play, &cfg)?;
    paired.provenance.robot_digest = Some(robot_digest.clone());
    paired.provenance.play_digest = Some(play_digest.clone());
    let (count, total) = nonconverged(&paired);
    strict_check(strict, count, total)?;
    let report = evaluate(&paired, &robot.sequences, &play)?;
    log_report(&report);

    let mut run = RunRecorder::start("imagine", json!({ "retrieval": cfg }), None);
    run.input("robot", &args.robot, robot_digest);
    run.input("play", &args.play, play_digest);
    create_dir(&args.out)?;
    let paired_dir = args.out.join(PAIRED_DIR);
    write_paired(&paired, &paired_dir)?;
    run.output(PAIRED_FILE, file_digest(&paired_dir.join(PAIRED_FILE))?);
    run.output(REPORT_JSON, write_json(&args.out.join(REPORT_JSON), &report)?);
    run.finish(&args.out)
}

fn join_tasks(tasks: &BTreeSet<seqmatch::TaskId>) -> String {
    tasks.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let paired = read_paired(&args.paired)?;
    let paired_digest = file_digest(&args.paired.join(PAIRED_FILE))?;
    let (play, play_digest) = load(&args.play)?;
    if let Some(recorded) = &paired.provenance.play_digest {
        if *recorded != play_digest {
            log::warn!("play dataset digest differs from the one recorded at retrieval time");
        }
    }
    let mut run = RunRecorder::start("eval", json!({ "retrieval": paired.provenance.config }), None);
    let robot_set = match &args.robot {
        Some(p) => {
            let (db, digest) = load(p)?;
            run.input("robot", p, digest);
            db.sequences
        }
        None => paired.entries.iter().map(|e| e.robot.clone()).collect(),
    };
    run.input("paired", &args.paired, paired_digest);
    run.input("play", &args.play, play_digest);

    let report = evaluate(&paired, &robot_set, &play)?;
    log_report(&report);
    create_dir(&args.out)?;
    run.output(REPORT_JSON, write_json(&args.out.join(REPORT_JSON), &report)?);

    let path = args.out.join(REPORT_CSV);
    let mut w = csv_writer(&path)?;
    csv_row(
        &mut w,
        &path,
        ["robot_id", "robot_tasks", "retrieved_tasks", "recall", "imprecision", "segments", "segments_correct"],
    )?;
    for t in &report.per_trajectory {
        csv_row(
            &mut w,
            &path,
            [
                t.robot_id.clone(),
                join_tasks(&t.robot_tasks),
                join_tasks(&t.retrieved_tasks),
                t.recall.to_string(),
                t.imprecision.to_string(),
                t.segments.to_string(),
                t.segments_correct.to_string(),
            ],
        )?;
    }
    csv_row(
        &mut w,
        &path,
        [
            "mean".to_string(),
            String::new(),
            String::new(),
            report.task_recall.to_string(),
            report.task_imprecision.to_string(),
            report.segments.to_string(),
            String::new(),
        ],
    )?;
    run.output(REPORT_CSV, csv_finish(w, &path)?);
    run.finish(&args.out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub kprime: usize,
    pub k: String,
    pub recall: f64,
    pub imprecision: f64,
    pub top1_accuracy: f64,
    pub segments: usize,
    pub nonconverged_segments: usize,
}

pub fn segment_lengths(robot: &SnippetDatabase, kprime: usize) -> String {
    let ks: BTreeSet<usize> = robot.sequences.iter().map(|s| (s.sequence.len() / kprime).max(1)).collect();
    let ks: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
    ks.join(";")
}

pub fn ablate(args: &AblateArgs, strict: bool) -> Result<(), CliError> {
    if args.kprime.is_empty() {
        return Err(CliError::Usage("--kprime needs at least one value".into()));
    }
    if args.kprime.contains(&0) {
        return Err(CliError::Usage("--kprime values must be >= 1".into()));
    }
    let distance: DistanceConfig = args.method.distance()?;
    let final_window = args.final_window();
    let (robot, robot_digest) = load(&args.robot)?;
    let (play, play_digest) = load(&args.play)?;
    check_dims(&robot, &play)?;

    let mut rows = Vec::with_capacity(args.kprime.len());
    let (mut count, mut total) = (0, 0);
    for &kp in &args.kprime {
        let cfg = RetrievalConfig { segmentation: Segmentation::Count(kp), distance, final_window };
        let paired = build_paired_dataset(&robot.sequences, &play, &cfg)?;
        let (n, t) = nonconverged(&paired);
        count += n;
        total += t;
        let report = evaluate(&paired, &robot.sequences, &play)?;
        log::info!("K'={kp}: recall {:.4}", report.task_recall);
        rows.push(AblationRow {
            kprime: kp,
            k: segment_lengths(&robot, kp),
            recall: report.task_recall,
            imprecision: report.task_imprecision,
            top1_accuracy: report.top1_accuracy,
            segments: report.segments,
            nonconverged_segments: n,
        });
    }
    strict_check(strict, count, total)?;

    let config = json!({ "distance": distance, "final_window": final_window, "kprime": args.kprime });
    let mut run = RunRecorder::start("ablate", config, None);
    run.input("robot", &args.robot, robot_digest);
    run.input("play", &args.play, play_digest);
    create_dir(&args.out)?;
    let path = args.out.join(ABLATION_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|source| CliError::Csv { path: path.clone(), source })?;
    for row in &rows {
        w.serialize(row).map_err(|source| CliError::Csv { path: path.clone(), source })?;
    }
    run.output(ABLATION_FILE, csv_finish(w, &path)?);
    run.finish(&args.out)
}
