//! End-to-end tests against the built binary: exit-code contract, report
//! envelope, determinism, and the output formats.

use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

fn porlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_porlab"))
        .args(args)
        .env_remove("PORLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn scratch_dir(tag: &str) -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "porlab-cli-{}-{tag}-{n}",
        std::process::id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn model_walkthrough_reproduces_all_claims_and_exits_zero() {
    let out = porlab(&["example71"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        stderr(&out)
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let claims = report["payload"]["claims"].as_array().unwrap();
    assert_eq!(claims.len(), 4);
    for claim in claims {
        assert_eq!(
            claim["pass"], true,
            "claim {} failed: {}",
            claim["name"], claim["details"]
        );
    }
    assert_eq!(report["schema_version"], "1");
}

#[test]
fn weight_analysis_on_an_empty_target_exits_one() {
    let out = porlab(&[
        "check-weight",
        "--space",
        "segment:N=4,h=1/128",
        "--set",
        "empty",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("empty"));
}

#[test]
fn injected_partition_fault_exits_two() {
    let out = porlab(&[
        "--inject-fault",
        "bad-partition",
        "build-dyadic",
        "--space",
        "segment:N=2,h=1/16",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("invariant violation"));
}

#[test]
fn unit_step_bound_on_the_branch_space_exits_three() {
    let out = porlab(&[
        "keysum",
        "--space",
        "cross:Tmax=16,h=1/16",
        "--theta",
        "0.5",
        "--grids",
        "1",
        "--step-bound",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("generation step hypothesis"));
}

#[test]
fn measured_step_bound_on_the_branch_space_holds() {
    let out = porlab(&[
        "keysum",
        "--space",
        "cross:Tmax=16,h=1/16",
        "--theta",
        "0.5",
        "--grids",
        "1",
        "--no-stamp",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["payload"]["step_bound"].as_u64().unwrap() >= 2);
    let roots = report["payload"]["roots"].as_array().unwrap();
    assert!(!roots.is_empty());
    for root in roots {
        assert!(root["key_sum"]["slack"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn unstamped_reruns_are_byte_identical_and_the_stamp_is_one_key() {
    let args = [
        "--seed",
        "5",
        "exponent",
        "--space",
        "segment:N=4,h=1/64",
        "--no-stamp",
    ];
    let a = stdout(&porlab(&args));
    let b = stdout(&porlab(&args));
    assert_eq!(a, b, "unstamped reruns must match byte for byte");

    let stamped = stdout(&porlab(&args[..args.len() - 1]));
    let mut with_ts: serde_json::Value = serde_json::from_str(&stamped).unwrap();
    let ts = with_ts
        .as_object_mut()
        .unwrap()
        .remove("generated_at")
        .expect("stamped report carries generated_at");
    assert!(ts.as_u64().unwrap() > 0);
    let bare: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(with_ts, bare, "only the stamp may differ");
}

#[test]
fn porosity_scan_prints_a_csv_frontier() {
    let out = porlab(&[
        "--seed",
        "3",
        "porosity-scan",
        "--space",
        "cross:Tmax=12,h=1/16",
        "--delta",
        "0.4,1/2",
        "--balls",
        "30",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "delta,worst_c,witness_center,witness_radius,balls,failed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let worst: f64 = fields[1].parse().unwrap();
        assert!(worst > 0.0 && worst <= 1.0, "worst c {worst}");
        assert_eq!(fields[5], "0", "no ball should fail outright");
    }
}

#[test]
fn report_writes_the_envelope_and_all_tables() {
    let dir = scratch_dir("report");
    let out = porlab(&[
        "--seed",
        "1",
        "report",
        "--space",
        "cross:Tmax=12,h=1/16",
        "--out",
        dir.to_str().unwrap(),
        "--no-stamp",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), "", "directory mode keeps stdout clean");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], "1");
    assert_eq!(report["seed"], 1);
    assert_eq!(report["config"]["space"], "cross:Tmax=12,h=1/16");
    assert_eq!(report["resolution"], 0.0625);
    let a = report["measured"]["a"].as_f64().unwrap();
    let big_a = report["measured"]["big_a"].as_f64().unwrap();
    let c_mu = report["measured"]["c_mu"].as_f64().unwrap();
    assert!(a > 0.0 && big_a >= a && c_mu >= 1.0);
    for key in ["dyadic-check", "holes", "porosity", "keysum", "weight", "exponent"] {
        assert!(report["payload"].get(key).is_some(), "missing {key}");
    }
    for table in ["hole_profile.csv", "porosity_scan.csv", "weight_profile.csv"] {
        assert!(dir.join(table).is_file(), "missing {table}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_drives_a_run_and_flags_override_it() {
    let dir = scratch_dir("config");
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        r#"{ "space": "segment:N=4,h=1/128", "samples": 8, "seed": 11 }"#,
    )
    .unwrap();
    let out = porlab(&[
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "12",
        "exponent",
        "--no-stamp",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["config"]["space"], "segment:N=4,h=1/128");
    assert_eq!(report["config"]["samples"], 8);
    assert_eq!(report["seed"], 12, "the flag outranks the file");
    assert_eq!(report["payload"]["samples_requested"], 8);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn thread_settings_are_honored_and_validated() {
    let ok = Command::new(env!("CARGO_BIN_EXE_porlab"))
        .args(["exponent", "--space", "segment:N=2,h=1/128", "--no-stamp"])
        .env("PORLAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(ok.status.success(), "stderr: {}", stderr(&ok));

    let bad = Command::new(env!("CARGO_BIN_EXE_porlab"))
        .args(["exponent", "--space", "segment:N=2,h=1/128"])
        .env("PORLAB_THREADS", "frog")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));

    let flag_wins = Command::new(env!("CARGO_BIN_EXE_porlab"))
        .args([
            "--threads",
            "1",
            "exponent",
            "--space",
            "segment:N=2,h=1/128",
            "--no-stamp",
        ])
        .env("PORLAB_THREADS", "frog")
        .output()
        .unwrap();
    assert!(
        flag_wins.status.success(),
        "the flag must preempt the env var: {}",
        stderr(&flag_wins)
    );
}

#[test]
fn refinement_ladder_yields_a_trend_with_a_verdict() {
    let out = porlab(&[
        "check-weight",
        "--space",
        "segment:N=8,h=1/16",
        "--alpha",
        "0.5",
        "--ladder",
        "1/16,1/32,1/64",
        "--no-stamp",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let trend = &report["payload"]["trend"];
    assert_eq!(trend["points"].as_array().unwrap().len(), 3);
    assert!(trend["verdict"].is_string());
    assert!(report["payload"]["estimate"]["constant"].as_f64().unwrap() >= 1.0);
}
