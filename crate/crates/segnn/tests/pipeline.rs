//! Integration coverage for the end-to-end driver: artifact layout,
//! checkpoint integrity, and failure paths.

use std::path::Path;

use segnn::config::RunConfig;
use segnn::fixture::{generate, write_fixture, FixtureOptions};
use segnn::pipeline::run_pipeline;
use segnn::SegnnError;

fn small_config(dir: &Path) -> RunConfig {
    let opts = FixtureOptions {
        num_entities: 40,
        num_triples: 120,
        num_relations: 4,
        ..FixtureOptions::default()
    };
    let f = generate(&opts).unwrap();
    write_fixture(&f, dir).unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut cfg = RunConfig {
        kg1_triples: p("kg1_triples.txt"),
        kg1_ent_ids: p("kg1_ent_ids.txt"),
        kg1_rel_ids: p("kg1_rel_ids.txt"),
        kg2_triples: p("kg2_triples.txt"),
        kg2_ent_ids: p("kg2_ent_ids.txt"),
        kg2_rel_ids: p("kg2_rel_ids.txt"),
        sem1: p("sem1.txt"),
        sem2: p("sem2.txt"),
        reference: p("reference_pairs.txt"),
        out_dir: p("out"),
        ..RunConfig::default()
    };
    cfg.dim = 16;
    cfg.interval = 5;
    cfg.max_updates = 1;
    cfg.train_frac = 0.2;
    cfg.valid_frac = 0.1;
    cfg.test_frac = 0.7;
    cfg
}

#[test]
fn pipeline_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run_pipeline(&cfg).unwrap();
    for name in [
        "expanded_seeds.txt",
        "seed_summary.json",
        "training_log.jsonl",
        "tnecs-history.json",
        "checkpoint.bin",
        "report.json",
        "report.csv",
    ] {
        assert!(out.out_dir.join(name).exists(), "missing {name}");
    }
    // The checkpoint loads back and matches the run shape.
    let ck = segnn::checkpoint::load_checkpoint(&out.out_dir.join("checkpoint.bin")).unwrap();
    assert_eq!(ck.dim, 16);
    assert_eq!(ck.n1, 40);
    assert_eq!(ck.seeds.pairs(), out.seeds.pairs());
    // Training log has one record per epoch: 2 blocks of 5.
    let log = std::fs::read_to_string(out.out_dir.join("training_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 10);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.out_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(report["hits@1"].is_number());
    assert_eq!(report["config"]["dim"], "16");
}

#[test]
fn seed_candidate_exclusion_changes_nothing_on_disjoint_splits() {
    // Training endpoints never appear in test pairs, so dropping them from
    // the candidate pool can only raise metrics.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    let base = run_pipeline(&cfg).unwrap().report;
    cfg.exclude_seed_candidates = true;
    cfg.out_dir = dir.path().join("out_excl").to_string_lossy().into_owned();
    let excl = run_pipeline(&cfg).unwrap().report;
    assert!(excl.hits[&1] >= base.hits[&1]);
    assert!(excl.mrr >= base.mrr - 1e-12);
}

#[test]
fn no_seeds_at_all_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    // No pre-aligned pairs and a threshold nothing can clear.
    cfg.train_frac = 0.0;
    cfg.test_frac = 0.9;
    cfg.theta_sem = 10.0;
    assert!(matches!(
        run_pipeline(&cfg),
        Err(SegnnError::EmptySeeds)
    ));
}

#[test]
fn invalid_config_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.epsilon = 2.0;
    let err = match run_pipeline(&cfg) {
        Err(e) => e,
        Ok(_) => panic!("expected a config error"),
    };
    assert!(matches!(err, SegnnError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_dataset_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.sem1 = dir.path().join("nope.txt").to_string_lossy().into_owned();
    let err = match run_pipeline(&cfg) {
        Err(e) => e,
        Ok(_) => panic!("expected a data error"),
    };
    assert_eq!(err.exit_code(), 3);
}
