//! End-to-end CLI coverage: generate -> calibrate -> train -> run -> sweep ->
//! report through the installed binary, plus error-path exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hspice() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hspice"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn hspice");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

/// Lays out profile, patterns, stream, schema, and a base experiment config.
fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();

    write(
        &root.join("patterns.json"),
        r#"[
          {"id": 1, "weight": 1.0, "policy": "skip_till_any_match",
           "steps": [
             {"kind": "single", "types": [0], "guard": "attr(pct_change) >= 0.5"},
             {"kind": "single", "types": [1], "guard": "attr(pct_change) >= 0.5"},
             {"kind": "single", "types": [2], "guard": "attr(pct_change) >= 0.5"}
           ]}
        ]"#,
    );
    write(
        &root.join("profile.json"),
        r#"{
          "type_count": 6,
          "length": 20000,
          "seed": 9,
          "window": {"kind": "count_based", "size": 25, "slide": 5},
          "plants": [{"pattern_id": 1, "density": 0.55,
                      "offsets": [[0,6],[9,15],[18,24]]}],
          "noise_types": [3,4,5],
          "pattern_type_noise": 0.35,
          "attrs": {"pct_change": {"dist": "uniform", "lo": -0.4, "hi": 0.45}},
          "satisfy": {"pct_change": [0.5, 0.9]}
        }"#,
    );
    write(
        &root.join("train_profile.json"),
        r#"{
          "type_count": 6,
          "length": 20000,
          "seed": 1009,
          "window": {"kind": "count_based", "size": 25, "slide": 5},
          "plants": [{"pattern_id": 1, "density": 0.55,
                      "offsets": [[0,6],[9,15],[18,24]]}],
          "noise_types": [3,4,5],
          "pattern_type_noise": 0.35,
          "attrs": {"pct_change": {"dist": "uniform", "lo": -0.4, "hi": 0.45}},
          "satisfy": {"pct_change": [0.5, 0.9]}
        }"#,
    );
    Workspace { _dir: dir, root }
}

fn config_json(shedder: &str, stream: &str, model: Option<&str>) -> String {
    let model_line = model
        .map(|m| format!("\"model\": \"{m}\",\n"))
        .unwrap_or_default();
    format!(
        r#"{{
          "stream": "{stream}",
          "schema": "schema.json",
          "patterns": "patterns.json",
          "window": {{"kind": "count_based", "size": 25, "slide": 5}},
          "shedder": {{"shedder": "{shedder}"}},
          {model_line}
          "seed": 5,
          "rate_pct": 100.0,
          "queue_capacity": 30000,
          "cost_model": {{"base_event_ns": 200, "window_assign_ns": 100,
                          "pairing_ns": 20000, "guard_ns": 400, "decision_ns": 50}},
          "table_positions": 25
        }}"#
    )
}

#[test]
fn full_workflow_through_the_binary() {
    let ws = workspace();
    let root = &ws.root;

    // generate: run stream (writes the schema too) and training stream.
    let out = run_ok(hspice().current_dir(root).args([
        "generate",
        "--profile",
        "profile.json",
        "--patterns",
        "patterns.json",
        "--out",
        "events.jsonl",
        "--sidecar",
        "planted.jsonl",
        "--schema-out",
        "schema.json",
    ]));
    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("generate prints JSON");
    assert_eq!(summary["events"], 20_000);
    assert!(summary["planted"].as_u64().unwrap() > 0);
    run_ok(hspice().current_dir(root).args([
        "generate",
        "--profile",
        "train_profile.json",
        "--patterns",
        "patterns.json",
        "--out",
        "train_events.jsonl",
    ]));

    // Determinism at the file level: same profile, same bytes.
    run_ok(hspice().current_dir(root).args([
        "generate",
        "--profile",
        "profile.json",
        "--patterns",
        "patterns.json",
        "--out",
        "events2.jsonl",
    ]));
    assert_eq!(
        std::fs::read(root.join("events.jsonl")).unwrap(),
        std::fs::read(root.join("events2.jsonl")).unwrap()
    );

    write(
        &root.join("run.json"),
        &config_json("hspice", "events.jsonl", Some("model.json")),
    );
    write(
        &root.join("train.json"),
        &config_json("never", "train_events.jsonl", None),
    );
    write(
        &root.join("run_never.json"),
        &config_json("never", "events.jsonl", None),
    );
    write(
        &root.join("run_random.json"),
        &config_json("random", "events.jsonl", None),
    );

    // calibrate prints mu.
    let out = run_ok(hspice().current_dir(root).args([
        "calibrate",
        "--config",
        "run_never.json",
        "--events",
        "4000",
    ]));
    let cal: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cal["mu"].as_f64().unwrap() > 0.0);

    // train exports the model bundle.
    let out = run_ok(hspice().current_dir(root).args([
        "train",
        "--config",
        "train.json",
        "--out",
        "model.json",
    ]));
    let trained: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(trained["observations"].as_u64().unwrap() > 10_000);

    // run with the never-drop shedder: no QoR impact at any rate <= 100%.
    run_ok(hspice().current_dir(root).args([
        "run",
        "--config",
        "run_never.json",
        "--out",
        "report_never.json",
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("report_never.json")).unwrap())
            .unwrap();
    assert_eq!(report["fn_weighted"], 0.0);
    assert_eq!(report["fp_weighted"], 0.0);

    // run with the state-aware shedder at 180%, with artifacts.
    run_ok(hspice().current_dir(root).args([
        "run",
        "--config",
        "run.json",
        "--rate",
        "180",
        "--out",
        "report_hspice.json",
        "--latency-csv",
        "latency.csv",
        "--plan-trace",
        "plan.jsonl",
        "--detected",
        "detected.jsonl",
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("report_hspice.json")).unwrap())
            .unwrap();
    assert!(report["drop_ratio"].as_f64().unwrap() > 0.0);
    let latency_csv = std::fs::read_to_string(root.join("latency.csv")).unwrap();
    assert!(latency_csv.lines().count() > 10_000);
    let plan_lines = std::fs::read_to_string(root.join("plan.jsonl")).unwrap();
    assert!(plan_lines
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(plan_lines
        .lines()
        .any(|l| l.contains("\"overloaded\":true")));
    assert!(!std::fs::read_to_string(root.join("detected.jsonl"))
        .unwrap()
        .is_empty());

    // sweep the random shedder across rates: drop ratio non-decreasing.
    run_ok(hspice().current_dir(root).args([
        "sweep",
        "--config",
        "run_random.json",
        "--rates",
        "120,140,160,180,200",
        "--out-dir",
        "sweep_out",
    ]));
    let mut ratios = Vec::new();
    for rate in [120, 140, 160, 180, 200] {
        let path = root.join(format!("sweep_out/report-random-ws25-r{rate}.json"));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        ratios.push(report["drop_ratio"].as_f64().unwrap());
    }
    assert!(
        ratios.windows(2).all(|w| w[0] <= w[1] + 1e-9),
        "drop ratio must not decrease with rate: {ratios:?}"
    );

    // report merges everything into one CSV row per run.
    run_ok(hspice().current_dir(root).args([
        "report",
        "--inputs",
        "sweep_out",
        "report_hspice.json",
        "report_never.json",
        "--out",
        "summary.csv",
    ]));
    let csv = std::fs::read_to_string(root.join("summary.csv")).unwrap();
    // Header plus 5 sweep cells plus 2 standalone runs.
    assert_eq!(csv.lines().count(), 1 + 5 + 2);
    assert!(csv
        .lines()
        .next()
        .unwrap()
        .starts_with("file,shedder,rate_pct"));
}

#[test]
fn config_errors_exit_with_usage_code() {
    let ws = workspace();
    let root = &ws.root;
    write(&root.join("bad.json"), "{\"stream\": 12}");
    let out = hspice()
        .current_dir(root)
        .args(["run", "--config", "bad.json", "--out", "r.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr carries error JSON");
    assert_eq!(err["kind"], "config");

    // Unknown subcommand flags exit 2 as well (clap usage error).
    let out = hspice().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_shedder_is_a_config_error() {
    let ws = workspace();
    let root = &ws.root;
    run_ok(hspice().current_dir(root).args([
        "generate",
        "--profile",
        "profile.json",
        "--patterns",
        "patterns.json",
        "--out",
        "events.jsonl",
        "--schema-out",
        "schema.json",
    ]));
    write(
        &root.join("bogus.json"),
        &config_json("bogus", "events.jsonl", None),
    );
    let out = hspice()
        .current_dir(root)
        .args(["run", "--config", "bogus.json", "--out", "r.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
