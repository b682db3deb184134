use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccr_core::io::read_answer_key;
use ccr_core::model::PresentationOrder;
use serde_json::json;

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example").join(file)
}

fn ccr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ccr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// Hypothetical per-condition perception of the degraded clip relative to the reference.
fn truth(condition: &str) -> i32 {
    match condition {
        c if c.ends_with("clean") => 0,
        c if c.ends_with("car") => -1,
        _ => -2,
    }
}

/// Three workers per section; the third always answers golds with +3.
fn write_submissions(answer_key: &Path, out: &Path) {
    let key = read_answer_key("answer_key.csv", &fs::read_to_string(answer_key).unwrap()).unwrap();
    let mut sections: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for k in &key {
        sections.entry(&k.section_id).or_default().push(k);
    }
    let mut lines = String::new();
    for (sid, items) in sections {
        for w in 0..3 {
            let ratings: Vec<_> = items
                .iter()
                .map(|k| {
                    let v = if k.is_gold {
                        if w == 2 { 3 } else { 0 }
                    } else {
                        let t = truth(&k.condition_id);
                        if k.order == PresentationOrder::ProcessedFirst { -t } else { t }
                    };
                    json!({"item_index": k.item_index, "rating": v})
                })
                .collect();
            let p = json!({
                "worker_id": format!("w{w}"),
                "assignment_id": format!("{sid}-{w}"),
                "section_id": sid,
                "session_timestamp": "2021-04-01T09:00:00Z",
                "last_training_timestamp": "2021-04-01T08:50:00Z",
                "device_check_answers": {"headphones": "yes"},
                "environment_test_answers": {"env1": "4", "env2": "7", "env3": "2", "env4": "9", "env5": "5"},
                "hearing_test_answers": {"hear1": "3", "hear2": "1", "hear3": "4", "hear4": "1", "hear5": "5", "hear6": "9"},
                "ratings": ratings,
            });
            lines.push_str(&p.to_string());
            lines.push('\n');
        }
    }
    fs::write(out, lines).unwrap();
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let study = data("study.json");
    let build = d.join("build");
    ok(&["build", "--study", s(&study), "--seed", "5", "--out", s(&build)]);
    for f in ["worker.csv", "answer_key.csv", "training.csv", "worker_manifest.json"] {
        assert!(build.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(build.join("worker_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scale"], "CCR");
    assert!(!manifest.to_string().contains("P_FIRST"));

    let subs = d.join("subs.jsonl");
    write_submissions(&build.join("answer_key.csv"), &subs);
    let screened = d.join("screened.csv");
    let votes = d.join("votes.csv");
    let summary = d.join("summary.json");
    ok(&[
        "screen", "--study", s(&study), "--keys", s(&data("qualification_keys.csv")),
        "--answer-key", s(&build.join("answer_key.csv")), "--subs", s(&subs),
        "--out", s(&screened), "--votes-out", s(&votes), "--summary-out", s(&summary),
    ]);
    let screened_text = fs::read_to_string(&screened).unwrap();
    for line in screened_text.lines().skip(1) {
        let accepted = !line.starts_with("w2,");
        assert!(line.contains(if accepted { ",true," } else { ",false,GoldFailed" }), "{line}");
    }

    let cmos = d.join("cmos.csv");
    ok(&["score", "--screened", s(&screened), "--votes", s(&votes), "--out", s(&cmos), "--orient", "degradation"]);
    let scores = ccr_core::io::read_scores("cmos.csv", &fs::read_to_string(&cmos).unwrap()).unwrap();
    assert_eq!(scores.len(), 6);
    for sc in &scores {
        assert_eq!(sc.mean, f64::from(truth(&sc.condition_id)), "{sc:?}");
    }

    let anova_dir = d.join("anova");
    ok(&[
        "stats", "anova", "--votes", s(&votes), "--study", s(&study), "--screened", s(&screened),
        "--factor-a", "codec", "--factor-b", "noise", "--out", s(&anova_dir),
    ]);
    let anova: serde_json::Value = serde_json::from_str(&fs::read_to_string(anova_dir.join("anova.json")).unwrap()).unwrap();
    assert_eq!(anova["pairwise"]["levels"].as_array().unwrap().len(), 3);
    let agree = ok(&["stats", "agree", "--runs", s(&anova_dir.join("anova.json")), s(&anova_dir.join("anova.json"))]);
    assert!(agree.contains("\"agreement\": 1.0"), "{agree}");

    let rd = ok(&["stats", "rankdelta", "--a", s(&cmos), "--b", s(&cmos)]);
    assert!(rd.contains("\"delta\": 0.0"));

    let report_dir = d.join("report");
    let text = ok(&[
        "report", "--study-id", "example", "--runs", s(&cmos), "--screening", s(&summary),
        "--bounds", "-3", "0", "--out", s(&report_dir),
    ]);
    assert!(text.contains("screening:"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    for p in report["outputs"].as_array().unwrap() {
        assert!(Path::new(p.as_str().unwrap()).exists(), "{p}");
    }
    assert!((report["acceptance_rate"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn simulate_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&[
        "simulate", "--true", s(&data("true_scores.csv")), "--runs", "3", "--raters", "60",
        "--sigma-v", "0.7", "--sigma-b", "0.1", "--seed", "4", "--out", s(&sim),
    ]);
    let runs: Vec<PathBuf> = (1..=3).map(|r| sim.join(format!("run{r}_cmos.csv"))).collect();
    let icc = ok(&["stats", "icc", "--runs", s(&runs[0]), s(&runs[1]), s(&runs[2])]);
    let v: serde_json::Value = serde_json::from_str(&icc).unwrap();
    assert!(v["icc"]["icc"].as_f64().unwrap() > 0.8);
    let cmp = ok(&["stats", "compare", "--a", s(&runs[0]), "--b", s(&runs[1])]);
    assert!(cmp.contains("pearson"));

    let report_dir = dir.path().join("rep");
    ok(&["report", "--runs", s(&runs[0]), s(&runs[0]), "--out", s(&report_dir)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    assert!((report["replication"]["icc"]["icc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(fs::read_to_string(report_dir.join("scatter.csv")).unwrap().lines().count(), 41);
}

#[test]
fn errors_exit_nonzero_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "condition_id,n,mean,sd\nC1,3,0,0\n").unwrap();
    let out = ccr(&["report", "--runs", s(&bad), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv") && err.contains("ci95"), "{err}");

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "condition_id,n,mean,sd,ci95\n").unwrap();
    assert!(!ccr(&["report", "--runs", s(&empty), "--out", s(dir.path())]).status.success());

    let out = ccr(&["build", "--study", s(&data("study.json"))]);
    assert!(!out.status.success());
}
