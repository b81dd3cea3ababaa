use std::collections::BTreeMap;
use std::sync::OnceLock;

use gammasr_core::manifest::{load_manifest, CorpusManifest, Session, WordGroup};
use gammasr_core::nn::encode_checkpoint;
use gammasr_core::synth::{synth_corpus, SynthConfig, MANIFEST_FILE};
use gammasr_core::tasks::{
    label_intelligibility, make_folds, run_task, split_task, Decision, EvalReport, Mode, SeverityClass, Task,
    TaskConfig,
};
use proptest::prelude::*;
use tempfile::TempDir;

/// 3 words + 1 cw word, 4 speakers, 2 reps: small enough to train in a second.
fn corpus() -> &'static (TempDir, CorpusManifest) {
    static CORPUS: OnceLock<(TempDir, CorpusManifest)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            words: 3,
            cw_words: 1,
            speakers: 4,
            reps: 2,
            severities: Some(vec![0.1, 0.3, 0.5, 0.8]),
            ..Default::default()
        };
        let m = synth_corpus(&cfg, 21, dir.path()).unwrap();
        (dir, m)
    })
}

fn quick(task: Task, mode: Mode) -> TaskConfig {
    let mut cfg = TaskConfig::new(task, mode).unwrap();
    cfg.image_size = 16;
    cfg.hyper.epochs = 2;
    cfg.hyper.seed = 4;
    cfg
}

proptest! {
    #[test]
    fn intelligibility_thresholds(pct in 0i64..=100) {
        let three = label_intelligibility(pct, 3).unwrap();
        let want = if pct <= 37 {
            SeverityClass::HighSeverity
        } else if pct <= 62 {
            SeverityClass::MidSeverity
        } else {
            SeverityClass::LowSeverity
        };
        prop_assert_eq!(three, want);
        let two = label_intelligibility(pct, 2).unwrap();
        prop_assert_eq!(two.name(), if pct <= 62 { "low" } else { "high" });
    }

    #[test]
    fn report_mean_is_unweighted(counts in prop::collection::vec((1usize..20, 0usize..20), 1..6)) {
        let labels = vec!["a".to_string(), "b".to_string()];
        let speakers: Vec<String> = (0..counts.len()).map(|i| format!("S{i}")).collect();
        let mut decisions = Vec::new();
        for (spk, &(total, right)) in speakers.iter().zip(&counts) {
            let right = right.min(total);
            for k in 0..total {
                decisions.push(Decision { speaker: spk, truth: 0, predicted: usize::from(k >= right) });
            }
        }
        let r = EvalReport::from_decisions(&labels, decisions).unwrap();
        let want = counts
            .iter()
            .map(|&(t, c)| 100.0 * c.min(t) as f64 / t as f64)
            .sum::<f64>()
            / counts.len() as f64;
        prop_assert!((r.mean - want).abs() < 1e-9);
        prop_assert_eq!(r.n_test, counts.iter().map(|c| c.0).sum::<usize>());
        prop_assert_eq!(r.confusion.iter().flatten().sum::<usize>(), r.n_test);
    }
}

#[test]
fn folds_partition_the_sessions() {
    let (_, m) = corpus();
    let plan = make_folds(m).unwrap();
    assert_eq!(plan.folds.len(), 3);
    for (f, s) in plan.folds.iter().zip(Session::ALL) {
        assert_eq!(f.train_sessions, vec![s]);
        let mut all: Vec<Session> = f.train_sessions.iter().chain(&f.test_sessions).copied().collect();
        all.sort();
        assert_eq!(all, Session::ALL);
    }
}

#[test]
fn manifest_survives_a_reload() {
    let (dir, m) = corpus();
    let back = load_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(back.records, m.records);
    assert_eq!(back.speakers, m.speakers);
}

#[test]
fn synthesis_is_reproducible() {
    let (dir, m) = corpus();
    let other = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        words: 3,
        cw_words: 1,
        speakers: 4,
        reps: 2,
        severities: Some(vec![0.1, 0.3, 0.5, 0.8]),
        ..Default::default()
    };
    synth_corpus(&cfg, 21, other.path()).unwrap();
    for r in &m.records {
        let a = std::fs::read(dir.path().join(&r.path)).unwrap();
        let b = std::fs::read(other.path().join(&r.path)).unwrap();
        assert!(a == b, "{} differs", r.path);
    }
}

#[test]
fn splits_respect_sessions_speakers_and_words() {
    let (_, m) = corpus();
    let plan = make_folds(m).unwrap();
    let fold = &plan.folds[1];
    let rec = |i: usize| &m.records[i];

    let sd = split_task(m, &quick(Task::Asr, Mode::SD), fold, 1).unwrap();
    assert_eq!(sd.len(), 1);
    assert!(sd[0].train.iter().all(|it| fold.train_sessions.contains(&rec(it.record).session)));
    assert!(sd[0].test.iter().all(|it| fold.test_sessions.contains(&rec(it.record).session)));
    assert!(sd[0].train.iter().chain(&sd[0].test).all(|it| rec(it.record).word_group != WordGroup::Cw));

    let si = split_task(m, &quick(Task::Asr, Mode::SI), fold, 1).unwrap();
    assert_eq!(si.len(), m.speakers.len());
    for s in &si {
        assert!(s.test.iter().all(|it| rec(it.record).speaker_id == s.name));
        assert!(s.train.iter().all(|it| rec(it.record).speaker_id != s.name));
    }

    let ti = split_task(m, &quick(Task::Sid, Mode::TI), fold, 1).unwrap();
    assert!(ti[0].train.iter().all(|it| rec(it.record).word_group != WordGroup::Cw));
    assert!(ti[0].test.iter().all(|it| rec(it.record).word_group == WordGroup::Cw));
}

#[test]
fn task_runs_are_reproducible() {
    let (_, m) = corpus();
    let cfg = quick(Task::Asr, Mode::SD);
    let a = run_task(m, &cfg).unwrap();
    let b = run_task(m, &cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.splits.len(), 3);
    for (x, y) in a.splits.iter().zip(&b.splits) {
        assert_eq!(encode_checkpoint(&x.checkpoint).unwrap(), encode_checkpoint(&y.checkpoint).unwrap());
    }
    let per: BTreeMap<_, _> = a.report.per_speaker.iter().map(|(k, v)| (k.clone(), v.total)).collect();
    assert_eq!(per.values().sum::<usize>(), a.report.n_test);
}

#[test]
fn zero_learning_rate_stays_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        words: 10,
        cw_words: 0,
        speakers: 2,
        reps: 1,
        ..Default::default()
    };
    let m = synth_corpus(&cfg, 8, dir.path()).unwrap();
    let mut task = quick(Task::Asr, Mode::SD);
    task.hyper.lr = 0.0;
    task.hyper.epochs = 1;
    let out = run_task(&m, &task).unwrap();
    let pct = out.report.overall_pct();
    assert!((pct - 10.0).abs() <= 5.0, "{pct}");
}
