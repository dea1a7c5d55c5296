//! End-to-end checks of the `kmcoach` binary: subcommand composition, exit
//! codes, determinism of outputs, and config-file precedence.

use std::path::Path;
use std::process::{Command, Output};

fn kmcoach(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmcoach"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Small cohort flags shared by several tests; tiny epochs keep this fast.
const COHORT: &[&str] = &[
    "synth",
    "--out",
    "cohort.json",
    "--seed",
    "11",
    "--n-learners",
    "24",
    "--n-concepts",
    "16",
    "--n-items",
    "12",
];

#[test]
fn full_pipeline_emits_reports_for_every_learner() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(COHORT, dir.path()));
    assert_ok(&kmcoach(
        &["validate", "--graph", "cohort.json"],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "train",
            "--graph",
            "cohort.json",
            "--out",
            "model.json",
            "--epochs",
            "8",
        ],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "assess",
            "--graph",
            "cohort.json",
            "--model",
            "model.json",
            "--out",
            "metrics.csv",
        ],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "coach",
            "--graph",
            "cohort.json",
            "--model",
            "model.json",
            "--out-dir",
            "reports",
        ],
        dir.path(),
    ));

    // Every learner answered items, so every learner gets a metrics row and
    // a report.
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 24);
    let reports: Vec<_> = std::fs::read_dir(dir.path().join("reports"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(
        reports.iter().filter(|n| n.starts_with("report_")).count(),
        24
    );
    assert!(reports.contains(&"summary.csv".to_string()));

    let report = std::fs::read_to_string(dir.path().join("reports/report_s00.md")).unwrap();
    for header in ["Where am I going?", "How am I going?", "Where to next?"] {
        assert!(report.contains(header), "missing {header}");
    }

    let summary = std::fs::read_to_string(dir.path().join("reports/summary.csv")).unwrap();
    assert!(summary.starts_with("learner,pattern,perf,d_prime,sensitivity,specificity\n"));
    assert_eq!(summary.lines().count(), 1 + 24);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(
        &["synth", "--out", "a.json", "--seed", "7"],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &["synth", "--out", "b.json", "--seed", "7"],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &["synth", "--out", "c.json", "--seed", "8"],
        dir.path(),
    ));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    let c = std::fs::read(dir.path().join("c.json")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let at = std::fs::read(dir.path().join("a.truth.json")).unwrap();
    let bt = std::fs::read(dir.path().join("b.truth.json")).unwrap();
    assert_eq!(at, bt);
}

#[test]
fn full_disclosure_leaves_no_latent_pairs() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(
        &[
            "synth",
            "--out",
            "g.json",
            "--mention-prob",
            "1",
            "--n-learners",
            "10",
        ],
        dir.path(),
    ));
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["latent_labels"].as_array().unwrap().len(), 0);
}

#[test]
fn course_scale_preset_sizes_the_concept_space() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(
        &["synth", "--out", "g.json", "--course-scale"],
        dir.path(),
    ));
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(graph["concepts"].as_array().unwrap().len(), 211);
    assert_eq!(graph["learners"].as_array().unwrap().len(), 150);
}

#[test]
fn validate_reports_cycles_with_domain_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cyclic = r#"{
        "learners": ["s1"],
        "concepts": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
        "assessments": [{"id": "q1", "label": "Q1", "concept": "a"}],
        "prerequisites": [["a", "b"], ["b", "a"]],
        "perceptions": [{"learner": "s1", "concept": "a", "state": "know"}],
        "responses": [{"learner": "s1", "assessment": "q1", "correct": 1}]
    }"#;
    std::fs::write(dir.path().join("bad.json"), cyclic).unwrap();
    let out = kmcoach(&["validate", "--graph", "bad.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cycle"));
}

#[test]
fn missing_input_is_an_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = kmcoach(&["validate", "--graph", "nope.json"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = kmcoach(
        &["synth", "--out", "g.json", "--frobnicate", "3"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn checkpoint_refuses_a_different_graph() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(COHORT, dir.path()));
    assert_ok(&kmcoach(
        &[
            "synth",
            "--out",
            "other.json",
            "--seed",
            "12",
            "--n-learners",
            "24",
            "--n-concepts",
            "16",
            "--n-items",
            "12",
        ],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "train",
            "--graph",
            "cohort.json",
            "--out",
            "model.json",
            "--epochs",
            "2",
        ],
        dir.path(),
    ));
    let out = kmcoach(
        &[
            "assess",
            "--graph",
            "other.json",
            "--model",
            "model.json",
            "--out",
            "m.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));
}

#[test]
fn eval_outputs_are_complete_and_job_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(COHORT, dir.path()));
    let common = [
        "eval",
        "--graph",
        "cohort.json",
        "--truth",
        "cohort.truth.json",
        "--mode",
        "true-latent",
        "--methods",
        "rg,lp",
        "--trials",
        "4",
    ];
    let mut one = common.to_vec();
    one.extend(["--out-dir", "r1", "--jobs", "1"]);
    let mut two = common.to_vec();
    two.extend(["--out-dir", "r2", "--jobs", "3"]);
    assert_ok(&kmcoach(&one, dir.path()));
    assert_ok(&kmcoach(&two, dir.path()));
    for name in ["results.csv", "results.json", "results.md", "manifest.json"] {
        let a = std::fs::read(dir.path().join("r1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across job counts");
    }
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("r1/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["trial_seeds"].as_array().unwrap().len(), 4);
    assert!(manifest["graph_fingerprint"].as_str().unwrap().len() > 8);
}

#[test]
fn true_latent_eval_requires_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(COHORT, dir.path()));
    let out = kmcoach(
        &[
            "eval",
            "--graph",
            "cohort.json",
            "--mode",
            "true-latent",
            "--methods",
            "rg",
            "--trials",
            "1",
            "--out-dir",
            "r",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"n_learners": 9, "n_concepts": 14, "n_items": 10}"#,
    )
    .unwrap();
    assert_ok(&kmcoach(
        &[
            "synth",
            "--out",
            "g.json",
            "--config",
            "cfg.json",
            "--n-learners",
            "5",
        ],
        dir.path(),
    ));
    let graph: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    // Flag wins for learners; file value applies where no flag was given.
    assert_eq!(graph["learners"].as_array().unwrap().len(), 5);
    assert_eq!(graph["concepts"].as_array().unwrap().len(), 14);
}

#[test]
fn subcommands_never_mutate_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(COHORT, dir.path()));
    let before = std::fs::read(dir.path().join("cohort.json")).unwrap();
    assert_ok(&kmcoach(
        &[
            "train",
            "--graph",
            "cohort.json",
            "--out",
            "model.json",
            "--epochs",
            "2",
        ],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "assess",
            "--graph",
            "cohort.json",
            "--model",
            "model.json",
            "--out",
            "m.csv",
        ],
        dir.path(),
    ));
    assert_eq!(
        before,
        std::fs::read(dir.path().join("cohort.json")).unwrap()
    );
}

#[test]
fn threshold_override_changes_inference() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&kmcoach(COHORT, dir.path()));
    assert_ok(&kmcoach(
        &[
            "train",
            "--graph",
            "cohort.json",
            "--out",
            "model.json",
            "--epochs",
            "8",
        ],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "assess",
            "--graph",
            "cohort.json",
            "--model",
            "model.json",
            "--out",
            "lo.csv",
        ],
        dir.path(),
    ));
    assert_ok(&kmcoach(
        &[
            "assess",
            "--graph",
            "cohort.json",
            "--model",
            "model.json",
            "--out",
            "hi.csv",
            "--threshold",
            "0.999999",
        ],
        dir.path(),
    ));
    let lo = std::fs::read_to_string(dir.path().join("lo.csv")).unwrap();
    let hi = std::fs::read_to_string(dir.path().join("hi.csv")).unwrap();
    assert_ne!(
        lo, hi,
        "a near-1 threshold should flip some inferred states"
    );
}
