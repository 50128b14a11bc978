use std::path::{Path, PathBuf};

use dataforge::pipeline::{run_pipeline, Fault, PipelineConfig};
use dataforge_core::orchestrator::{replay, JobStatus, Stage};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/corpus")
}

#[test]
fn exact_stubs_keep_every_clip() {
    let out = tempfile::tempdir().unwrap();
    let rep = run_pipeline(
        &corpus().join("manifest.jsonl"),
        &PipelineConfig::default(),
        out.path(),
        false,
    )
    .unwrap();
    assert_eq!(rep.kept, ["c01", "c02", "c03", "c04", "c05"]);
    assert!(rep.dropped.is_empty() && rep.failed_jobs.is_empty());
    assert_eq!(rep.summary.done, 5 * Stage::ALL.len());
}

#[test]
fn ten_percent_cer_is_dropped_at_the_gate() {
    let mut cfg = PipelineConfig::default();
    // One of ten characters wrong on both recognizers.
    for t in [&mut cfg.stages.asr_a, &mut cfg.stages.asr_b] {
        t.insert("c01".into(), "你好世界我们今天很坏".into());
    }
    let out = tempfile::tempdir().unwrap();
    let rep = run_pipeline(&corpus().join("manifest.jsonl"), &cfg, out.path(), false).unwrap();
    assert_eq!(rep.dropped, ["c01"]);
    assert_eq!(rep.kept.len() + rep.dropped.len(), 5);
    let text = std::fs::read_to_string(out.path().join("manifest.jsonl")).unwrap();
    let records: Vec<_> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let snap = replay(&records).unwrap();
    assert!(!snap.jobs.contains_key("c01:punct"));
    assert_eq!(snap.jobs["c02:feature_stub"].status, JobStatus::Done);
}

#[test]
fn one_recognizer_failing_is_enough_to_drop() {
    let mut cfg = PipelineConfig::default();
    cfg.stages
        .asr_b
        .insert("c04".into(), "hello world this is the test".into());
    let out = tempfile::tempdir().unwrap();
    let rep = run_pipeline(&corpus().join("manifest.jsonl"), &cfg, out.path(), false).unwrap();
    assert_eq!(rep.dropped, ["c04"]);
}

#[test]
fn faulted_run_matches_clean_outcome() {
    let clean_dir = tempfile::tempdir().unwrap();
    let clean = run_pipeline(
        &corpus().join("manifest.jsonl"),
        &PipelineConfig::default(),
        clean_dir.path(),
        false,
    )
    .unwrap();
    let cfg = PipelineConfig {
        faults: vec![Fault::Kill { at_job: 7 }, Fault::Stall { at_job: 20, ticks: 40 }],
        ..PipelineConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let rep = run_pipeline(&corpus().join("manifest.jsonl"), &cfg, dir.path(), false).unwrap();
    assert_eq!(rep.kept, clean.kept);
    assert_eq!(rep.summary.done, clean.summary.done);
    assert_eq!(rep.summary.open, 0);
}

#[test]
fn threaded_mode_drains() {
    let out = tempfile::tempdir().unwrap();
    let rep = run_pipeline(
        &corpus().join("manifest.jsonl"),
        &PipelineConfig::default(),
        out.path(),
        true,
    )
    .unwrap();
    assert_eq!(rep.kept.len(), 5);
    assert_eq!(rep.summary.open, 0);
}
