//! Library results checked against independently written evaluations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqmatch::data::{EmbeddingSequence, Embodiment, FrameLabel, LabeledSequence, SnippetDatabase, TaskId};
use seqmatch::losses::{
    mean_code_entropy, swav_assignment_loss, task_alignment_from_distances, task_alignment_loss,
    time_contrastive_from_similarities, time_contrastive_loss, LossForm, Similarity, SwavLossConfig,
    TimeContrastiveConfig,
};
use seqmatch::matrix::Matrix;
use seqmatch::ot::{
    cost_matrix, exact_ot_small, ot_distance, sinkhorn, swav_codes, CostMatrix, Metric, SinkhornConfig,
};
use seqmatch::retrieval::{
    build_paired_dataset, evaluate, imagine_demo, DistanceConfig, RetrievalConfig, Segmentation, SequenceDistance,
};
use seqmatch::synthgen::{gen_anchors, gen_benchmark, GenConfig, Level};
use seqmatch::tcc::{tcc_distance, TccConfig};

fn random_sequence(rng: &mut ChaCha8Rng, t: usize, d: usize) -> EmbeddingSequence {
    let data = (0..t * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    EmbeddingSequence::from_flat(t, d, data).unwrap()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Direct transcription of the windowed contrastive expression.
fn time_contrastive_reference(z: &EmbeddingSequence, w: usize, tau: f64, log: bool) -> f64 {
    let n = z.len();
    let mut loss = 0.0;
    for t in 0..n {
        let mut neg = 0.0;
        for u in 0..n {
            if (t as i64 - u as i64).unsigned_abs() as usize > w {
                neg += (cos(z.frame(t), z.frame(u)) / tau).exp();
            }
        }
        for p in 0..n {
            let gap = (t as i64 - p as i64).unsigned_abs() as usize;
            if p != t && gap <= w {
                let pos = (cos(z.frame(t), z.frame(p)) / tau).exp();
                let r = pos / (pos + neg);
                loss -= if log { r.ln() } else { r };
            }
        }
    }
    loss
}

fn task_alignment_reference(d: &Matrix, log: bool) -> f64 {
    let n = d.rows();
    let mut loss = 0.0;
    for i in 0..n {
        let mut others = 0.0;
        for j in 0..n {
            if j != i {
                others += (-d[(i, j)]).exp();
            }
        }
        let r = (-d[(i, i)]).exp() / ((-d[(i, i)]).exp() + others);
        loss -= if log { r.ln() } else { r };
    }
    loss
}

fn swav_reference(scores: &Matrix, codes: &Matrix, tau: f64) -> f64 {
    let mut total = 0.0;
    for b in 0..scores.rows() {
        let z: f64 = scores.row(b).iter().map(|s| (s / tau).exp()).sum();
        for k in 0..scores.cols() {
            let p = (scores[(b, k)] / tau).exp() / z;
            total -= codes[(b, k)] * p.ln();
        }
    }
    total / scores.rows() as f64
}

#[test]
fn time_contrastive_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let t = rng.random_range(2..16);
        let d = rng.random_range(1..8);
        let z = random_sequence(&mut rng, t, d);
        let w = rng.random_range(1..4);
        let tau = rng.random_range(0.2..2.0);
        for form in [LossForm::Ratio, LossForm::Log] {
            let cfg = TimeContrastiveConfig { window: w, temperature: tau, similarity: Similarity::Cosine, form };
            let got = time_contrastive_loss(&z, &cfg).unwrap();
            let want = time_contrastive_reference(&z, w, tau, form == LossForm::Log);
            assert!((got - want).abs() <= 1e-12, "case {case} {form:?}: {got} vs {want}");
        }
    }
}

#[test]
fn time_contrastive_drops_when_a_positive_gets_closer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = random_sequence(&mut rng, 8, 4);
    let cfg = TimeContrastiveConfig::default();
    let sim = seqmatch::losses::similarity_matrix(&z, Similarity::Cosine).unwrap();
    let base = time_contrastive_from_similarities(&sim, &cfg).unwrap();
    for delta in [1e-3, 1e-2, 1e-1] {
        let mut bumped = sim.clone();
        bumped[(3, 4)] += delta;
        bumped[(4, 3)] += delta;
        let l = time_contrastive_from_similarities(&bumped, &cfg).unwrap();
        assert!(l < base, "delta {delta}: {l} !< {base}");
    }
}

#[test]
fn task_alignment_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.random_range(2..10);
        let d = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0);
        for form in [LossForm::Ratio, LossForm::Log] {
            let got = task_alignment_from_distances(&d, form).unwrap();
            let want = task_alignment_reference(&d, form == LossForm::Log);
            assert!((got - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn task_alignment_with_ot_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = SinkhornConfig::default();
    let robot: Vec<_> = (0..4).map(|_| random_sequence(&mut rng, 6, 5)).collect();
    let demo: Vec<_> = (0..4).map(|_| random_sequence(&mut rng, 5, 5)).collect();
    let d = Matrix::from_fn(4, 4, |i, j| ot_distance(&robot[i], &demo[j], &cfg).unwrap());
    let got = task_alignment_loss(&robot, &demo, &cfg, LossForm::Ratio).unwrap();
    assert!((got - task_alignment_reference(&d, false)).abs() <= 1e-12);
}

#[test]
fn task_alignment_exact_under_equal_distances() {
    for n in [2, 4, 8] {
        for v in [0.0, 0.37, 1.0, 2.0] {
            let d = Matrix::filled(n, n, v);
            assert_eq!(task_alignment_from_distances(&d, LossForm::Ratio).unwrap(), -1.0);
        }
    }
}

#[test]
fn swav_loss_matches_reference_and_gibbs() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = SwavLossConfig::default();
    for _ in 0..100 {
        let (b, k) = (rng.random_range(1..32), rng.random_range(2..12));
        let scores = Matrix::from_fn(b, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let codes = swav_codes(&scores, &SinkhornConfig::default()).unwrap().targets();
        let got = swav_assignment_loss(&scores, &codes, &cfg).unwrap();
        assert!((got - swav_reference(&scores, &codes, cfg.temperature)).abs() <= 1e-12);
        assert!(got.is_finite());
        assert!(got >= mean_code_entropy(&codes) - 1e-12);
    }
}

#[test]
fn sinkhorn_approaches_exact_ot_on_small_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..20 {
        let m = rng.random_range(2..=3);
        let c = CostMatrix::new(Matrix::from_fn(2, m, |_, _| rng.random::<f64>()), Metric::Cosine).unwrap();
        let exact = exact_ot_small(&c).unwrap();
        let cfg = SinkhornConfig::default().with_epsilon(1.0 / 256.0).with_max_iters(100_000).with_tol(1e-9);
        let plan = sinkhorn(&c, &cfg).unwrap();
        assert!((plan.cost - exact).abs() <= 1e-2);
        assert!(plan.cost >= exact - 1e-9);
    }
}

fn anchors_2d() -> (Vec<f64>, Vec<f64>) {
    (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0])
}

#[test]
fn merged_clip_beats_single_task_distractors() {
    let (a, b) = anchors_2d();
    let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2f64.sqrt()).collect();
    let robot = EmbeddingSequence::from_frames(&[a.clone(), a.clone(), b.clone(), b.clone()]).unwrap();
    let merged = EmbeddingSequence::from_frames(&[m.clone(), m.clone()]).unwrap();
    let only_a = EmbeddingSequence::from_frames(&[a.clone(), a.clone()]).unwrap();
    let only_b = EmbeddingSequence::from_frames(&[b.clone(), b.clone()]).unwrap();
    // closed form: every robot frame is 1 - 1/sqrt 2 from the merged frame;
    // a single-task clip matches half the mass and pays 1 for the rest
    let c = cost_matrix(&robot, &merged, Metric::Cosine).unwrap();
    assert!(c.entries().as_slice().iter().all(|x| (x - (1.0 - 0.5f64.sqrt())).abs() < 1e-12));
    let cfg = SinkhornConfig::default();
    let dm = ot_distance(&robot, &merged, &cfg).unwrap();
    let da = ot_distance(&robot, &only_a, &cfg).unwrap();
    let db = ot_distance(&robot, &only_b, &cfg).unwrap();
    assert!((dm - 0.2929).abs() < 0.02 && (da - 0.5).abs() < 0.02 && (db - 0.5).abs() < 0.02);

    let bank = SnippetDatabase::new(
        Default::default(),
        vec![
            LabeledSequence::new("a", only_a, vec![FrameLabel::single(TaskId(0)); 2], Embodiment::Demonstrator)
                .unwrap(),
            LabeledSequence::new("b", only_b, vec![FrameLabel::single(TaskId(1)); 2], Embodiment::Demonstrator)
                .unwrap(),
            LabeledSequence::new(
                "m",
                merged,
                vec![FrameLabel::pair(TaskId(0), TaskId(1)); 2],
                Embodiment::Demonstrator,
            )
            .unwrap(),
        ],
    );
    let demo =
        imagine_demo(&robot, &bank, &RetrievalConfig::default().with_segmentation(Segmentation::Count(1))).unwrap();
    assert_eq!(demo.segments[0].snippet_id, "m");
}

#[test]
fn recorded_distance_is_the_minimum() {
    let b = gen_benchmark(Level::Medium, &GenConfig { trajectories: 3, ..Default::default() }).unwrap();
    for dist in [DistanceConfig::ot(SinkhornConfig::default()), DistanceConfig::tcc(TccConfig::default())] {
        let cfg = RetrievalConfig::default().with_distance(dist);
        for r in b.robot_set() {
            let demo = imagine_demo(&r.sequence, &b.play, &cfg).unwrap();
            for seg in &demo.segments {
                let z = r.sequence.slice(seg.range());
                for s in &b.play.sequences {
                    let v = dist.measure(&z, &s.sequence).unwrap().value;
                    assert!(seg.distance <= v);
                    if v == seg.distance {
                        assert!(seg.snippet_id <= s.id);
                    }
                }
            }
        }
    }
}

#[test]
fn easy_benchmark_retrieval_is_exact() {
    let b = gen_benchmark(Level::Easy, &GenConfig::default()).unwrap();
    let paired = build_paired_dataset(b.robot_set(), &b.play, &RetrievalConfig::default()).unwrap();
    assert_eq!(paired.entries.len(), b.robot.len());
    for (e, r) in paired.entries.iter().zip(b.robot_set()) {
        assert_eq!(e.robot.id, r.id);
        assert_eq!(e.demo.segments.last().unwrap().end, r.sequence.len());
        assert!(e.demo.segments.iter().all(|s| s.distance >= 0.0));
    }
    let rep = evaluate(&paired, b.robot_set(), &b.play).unwrap();
    assert_eq!(rep.top1_accuracy, 1.0);
    assert_eq!(rep.task_recall, 1.0);
}

#[test]
fn one_segment_with_single_task_snippets_covers_one_task() {
    let b = gen_benchmark(Level::Medium, &GenConfig::default()).unwrap();
    let cfg = RetrievalConfig::default().with_segmentation(Segmentation::Count(1));
    let paired = build_paired_dataset(b.robot_set(), &b.play, &cfg).unwrap();
    let rep = evaluate(&paired, b.robot_set(), &b.play).unwrap();
    assert!(rep.per_trajectory.iter().all(|t| t.recall <= 0.25));
}

#[test]
fn ot_recall_at_least_tcc_on_hard() {
    let b = gen_benchmark(Level::Hard, &GenConfig::default()).unwrap();
    let recall = |d| {
        let p = build_paired_dataset(b.robot_set(), &b.play, &RetrievalConfig::default().with_distance(d)).unwrap();
        evaluate(&p, b.robot_set(), &b.play).unwrap().task_recall
    };
    let ot = recall(DistanceConfig::ot(SinkhornConfig::default()));
    let tcc = recall(DistanceConfig::tcc(TccConfig::default()));
    assert!(ot >= tcc, "{ot} < {tcc}");
}

#[test]
fn tcc_identity_shrinks_with_temperature() {
    let cfg = GenConfig { robot_sigma: 0.0, ..Default::default() };
    let anchors = gen_anchors(&cfg).unwrap();
    let frames: Vec<Vec<f64>> = anchors.iter().map(|a| a.to_vec()).collect();
    let a = EmbeddingSequence::from_frames(&frames).unwrap();
    let mut last = f64::INFINITY;
    for temp in [1.0, 0.5, 0.2, 0.1, 0.05, 0.01] {
        let d = tcc_distance(&a, &a, &TccConfig::default().with_temperature(temp)).unwrap();
        assert!(d <= last, "{temp}: {d} > {last}");
        last = d;
    }
    assert!(last <= 1e-6);
}
