use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oracle_lab::datastore::load_dataset;
use oracle_lab_cli::{EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_INFEASIBLE};
use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oracle-lab"));
    c.env("ORACLE_LAB_THREADS", "1").env("RUST_LOG", "warn");
    c
}

fn write_config(dir: &Path, name: &str, v: Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny(devices: usize, sessions: usize) -> Value {
    json!({
        "seed": 5,
        "devices": {"count": devices},
        "channels": {"test_sessions": sessions},
        "planner": {"n_required": devices, "bits_per_point": 100000,
                    "comparison_draws": 10, "random_allocations": 5},
        "classifier": {"impaired": false, "train_windows_per_device": 40,
                       "test_windows_per_device": 20, "max_epochs": 2,
                       "learning_rate": 0.001}
    })
}

#[test]
fn gen_record_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "a.json", tiny(2, 0));
    let out = tmp.path().join("a");
    ok(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(
        load_dataset(&out.join("dataset.orcl"))
            .unwrap()
            .records
            .len(),
        2
    );

    let cfg = write_config(tmp.path(), "b.json", tiny(16, 1));
    let out = tmp.path().join("b");
    ok(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    let ds = load_dataset(&out.join("dataset.orcl")).unwrap();
    assert_eq!(ds.records.len(), 32);
    assert_eq!(ds.session(1).len(), 16);
}

#[test]
fn gen_is_deterministic_and_seed_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", tiny(3, 1));
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    ok(&["gen", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["gen", "--config", s(&cfg), "--out", s(&b)]);
    ok(&["gen", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]);
    let read = |d: &Path| fs::read(d.join("dataset.orcl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn full_pipeline_reproduces_reports() {
    let tmp = TempDir::new().unwrap();
    let mut v = tiny(3, 2);
    v["classifier"]["impaired"] = json!(true);
    let cfg = write_config(tmp.path(), "p.json", v);
    let mut reports = Vec::new();
    for run_dir in ["r1", "r2"] {
        let out = tmp.path().join(run_dir);
        let o = s(&out);
        ok(&["plan", "--config", s(&cfg), "--out", o]);
        ok(&[
            "gen",
            "--config",
            s(&cfg),
            "--out",
            o,
            "--plan",
            &format!("{o}/feasible.json"),
        ]);
        ok(&[
            "train",
            "--config",
            s(&cfg),
            "--out",
            o,
            "--dataset",
            &format!("{o}/dataset.orcl"),
        ]);
        ok(&[
            "eval",
            "--config",
            s(&cfg),
            "--out",
            o,
            "--model",
            &format!("{o}/model.json"),
            "--dataset",
            &format!("{o}/dataset.orcl"),
        ]);
        for f in [
            "plan.csv",
            "emd_matrix.csv",
            "confusion_session1.csv",
            "confusion_session2.csv",
            "train_log.csv",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        reports.push((
            fs::read(out.join("eval_report.json")).unwrap(),
            fs::read(out.join("plan_report.json")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    let rep: Value = serde_json::from_slice(&reports[0].0).unwrap();
    assert_eq!(rep["metrics"]["sessions"].as_array().unwrap().len(), 2);
    assert!(rep.get("timings").is_none());

    let agg = tmp.path().join("agg");
    let r1 = tmp.path().join("r1");
    ok(&[
        "report",
        "--out",
        s(&agg),
        s(&r1.join("eval_report.json")),
        s(&r1.join("plan_report.json")),
    ]);
    let acc = fs::read_to_string(agg.join("accuracy_box.csv")).unwrap();
    assert_eq!(acc.lines().count(), 2);
    assert!(acc.lines().nth(1).unwrap().starts_with("3,2,"));
    let ber = fs::read_to_string(agg.join("ber_comparison.csv")).unwrap();
    assert!(ber.lines().nth(1).unwrap().starts_with("3,"));
}

#[test]
fn calibrate_writes_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "k.json", json!({"calibration": {"levels": 5}}));
    let out = tmp.path().join("k");
    ok(&["calibrate", "--config", s(&cfg), "--out", s(&out)]);
    let text = fs::read_to_string(out.join("calibration.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("correction_real,correction_imag,main_tone_db,image_tone_db,immr_db"));
}

#[test]
fn mixed_hashes_warn_but_succeed() {
    let tmp = TempDir::new().unwrap();
    let mut paths = Vec::new();
    for seed in [1, 2] {
        let mut v = tiny(2, 1);
        v["seed"] = json!(seed);
        let cfg = write_config(tmp.path(), &format!("m{seed}.json"), v);
        let out = tmp.path().join(format!("m{seed}"));
        ok(&["plan", "--config", s(&cfg), "--out", s(&out)]);
        paths.push(out.join("plan_report.json"));
    }
    let o = ok(&[
        "report",
        "--out",
        s(&tmp.path().join("agg")),
        s(&paths[0]),
        s(&paths[1]),
    ]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("different configs"));
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(
        tmp.path(),
        "bad.json",
        json!({"classifier": {"augmentation_db": -5.0}}),
    );
    let o = run(&[
        "gen",
        "--config",
        s(&bad),
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    let missing = tmp.path().join("nope.json");
    let o = run(&[
        "plan",
        "--config",
        s(&missing),
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));

    // a separation threshold no two patterns can clear admits one member
    let mut v = tiny(4, 1);
    v["planner"]["emd_threshold"] = json!(100.0);
    let inf = write_config(tmp.path(), "inf.json", v);
    let o = run(&[
        "plan",
        "--config",
        s(&inf),
        "--out",
        s(&tmp.path().join("y")),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_INFEASIBLE));

    let mut v = tiny(2, 1);
    v["classifier"]["learning_rate"] = json!(1e38);
    let div = write_config(tmp.path(), "div.json", v);
    let out = tmp.path().join("z");
    ok(&["gen", "--config", s(&div), "--out", s(&out)]);
    let o = run(&[
        "train",
        "--config",
        s(&div),
        "--out",
        s(&out),
        "--dataset",
        s(&out.join("dataset.orcl")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(EXIT_DIVERGENCE),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
