use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_congestion-lab");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CONGESTION_LAB_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, days: &str, render: bool) {
    let out = dir.join("s");
    let mut args = vec!["synth", "--days", days, "--start", "2019-11-03", "--out", s(&out)];
    if !render {
        args.push("--no-render");
    }
    ok(&args);
}

#[test]
fn missing_inputs_exit_2() {
    let out = run(&["extract", "--frames", "/nonexistent", "--mask", "/nope.png", "--registry", "/r.csv", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["grid", "--registry", "/nope.csv", "--matrix", "/nope.csv", "--out-dir", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let out = run(&["--config", "/nonexistent.toml", "report", "--results", "/x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(run(&["grid", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn extract_skips_a_corrupt_frame_only_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "1", true);
    let frames = d.join("frames");
    std::fs::create_dir(&frames).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(d.join("s/frames")).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for p in &names[..10] {
        std::fs::copy(p, frames.join(p.file_name().unwrap())).unwrap();
    }
    std::fs::write(frames.join(names[10].file_name().unwrap()), b"not a png").unwrap();
    let (mask, registry) = (d.join("s/mask.png"), d.join("s/registry.csv"));
    let (strict_out, out_csv) = (d.join("strict.csv"), d.join("ex.csv"));
    let base = ["extract", "--frames", s(&frames), "--mask", s(&mask), "--registry", s(&registry)];
    let mut args = base.to_vec();
    args.extend(["--out", s(&strict_out)]);
    let strict = run(&args);
    assert_eq!(strict.status.code(), Some(3));
    assert!(!d.join("strict.csv").exists());

    let mut args = base.to_vec();
    args.extend(["--out", s(&out_csv), "--skip-bad"]);
    let out = run(&args);
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rejected"), "{err}");
    assert!(err.contains("10 frames"), "{err}");
    let text = std::fs::read_to_string(d.join("ex.csv")).unwrap();
    let frames: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(frames.len(), 10);
}

#[test]
fn grid_with_ha_emits_sixty_aggregates_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "4", false);
    let out_dir = d.join("g");
    let stdout = ok(&[
        "grid",
        "--matrix",
        s(&d.join("s/truth.csv")),
        "--registry",
        s(&d.join("s/registry.csv")),
        "--models",
        "HA",
        "--split",
        "first-k-train:3",
        "--out-dir",
        s(&out_dir),
    ]);
    assert!(stdout.contains("| 1 |"));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let aggregates: Vec<&str> = results.lines().filter(|l| l.contains(",HA,") && l.contains(",AGGREGATE,")).collect();
    assert_eq!(aggregates.len(), 60);
    assert!(results.lines().skip(1).all(|l| l.split(',').nth(10) == Some("")));
    for f in ["ranking.md", "manifest.txt", "timings.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("first-k-train:3"));

    let report = ok(&["report", "--results", s(&out_dir.join("results.csv")), "--exclude", "A"]);
    assert!(report.contains("## Split first-k-train:3"));
    assert!(report.contains("| HA |"));
}

#[test]
fn report_handles_empty_and_malformed_results() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = run(&["report", "--results", s(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "no results");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "interval_min,seq_min,pred_minutes\n").unwrap();
    let out = run(&["report", "--results", s(&bad)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pred_min"));

    let header = "interval_min,seq_min,pred_min,model,split,node,rmse,mae,corr,n,duration_ms,fingerprint\n";
    let bad = dir.path().join("bad2.csv");
    std::fs::write(&bad, format!("{header}5,15,5,HA,x,AGGREGATE,oops,1,,2,,ab\n")).unwrap();
    let out = run(&["report", "--results", s(&bad)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rmse"));
}

#[test]
fn split_inconsistency_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "2", false);
    let out = run(&[
        "grid",
        "--matrix",
        s(&d.join("s/truth.csv")),
        "--registry",
        s(&d.join("s/registry.csv")),
        "--split",
        "weekdays-only:14",
        "--out-dir",
        s(&d.join("g")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_predict_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "4", false);
    let m = d.join("s/truth.csv");
    let r = d.join("s/registry.csv");
    for model in ["HA", "ARIMA", "SVR_GRAPH"] {
        let file = d.join(format!("{model}.model"));
        ok(&[
            "train",
            "--matrix",
            s(&m),
            "--registry",
            s(&r),
            "--model",
            model,
            "--node",
            "B",
            "--interval",
            "5",
            "--sequence",
            "15",
            "--horizon",
            "5",
            "--split",
            "first-k-train:3",
            "--svr-max-train-rows",
            "150",
            "--out",
            s(&file),
        ]);
        let preds = d.join(format!("{model}.csv"));
        ok(&[
            "predict",
            "--model",
            s(&file),
            "--matrix",
            s(&m),
            "--registry",
            s(&r),
            "--split",
            "first-k-train:3",
            "--out",
            s(&preds),
        ]);
        let text = std::fs::read_to_string(&preds).unwrap();
        assert!(text.starts_with("node,timestamp,truth,prediction\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("B,2019-11-06T"));
        let report = ok(&["evaluate", "--predictions", s(&preds)]);
        let agg = report.lines().last().unwrap();
        assert!(agg.starts_with("AGGREGATE,"), "{report}");
        let rmse: f64 = agg.split(',').nth(1).unwrap().parse().unwrap();
        assert!(rmse.is_finite() && rmse >= 0.0);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "4", false);
    std::fs::write(
        d.join("lab.toml"),
        "split = \"first-k-train:3\"\nworkers = 2\n[paths]\nmatrix = \"s/truth.csv\"\nregistry = \"s/registry.csv\"\nresults = \"out\"\n[grid]\nmodels = [\"HA\"]\nintervals_min = [5]\nsequence_min = [15]\nprediction_min = [5]\n",
    )
    .unwrap();
    ok(&["--config", s(&d.join("lab.toml")), "grid"]);
    let results = std::fs::read_to_string(d.join("out/results.csv")).unwrap();
    assert_eq!(results.lines().filter(|l| l.contains("AGGREGATE")).count(), 1);

    ok(&["--config", s(&d.join("lab.toml")), "grid", "--models", "HA,ARIMA", "--out-dir", s(&d.join("out2"))]);
    let results = std::fs::read_to_string(d.join("out2/results.csv")).unwrap();
    assert_eq!(results.lines().filter(|l| l.contains("AGGREGATE")).count(), 2);

    std::fs::write(d.join("typo.toml"), "splt = \"x\"\n").unwrap();
    assert_eq!(run(&["--config", s(&d.join("typo.toml")), "grid"]).status.code(), Some(2));
}

#[test]
fn workers_env_is_validated() {
    let out = Command::new(BIN)
        .args(["report", "--results", "/nonexistent.csv"])
        .env("CONGESTION_LAB_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CONGESTION_LAB_WORKERS"));
}
