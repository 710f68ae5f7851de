use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcode::dataset::{load_csv, save_csv};
use mcode::model::{estimate_rho, fit_mcode, LambdaPolicy, Mode};
use mcode::persist::{load_manifest, load_model};
use mcode::synthetic::{planted_benchmark, PlantedSpec};

fn mcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcode")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &Path, n: usize, m: usize, d: usize) -> PathBuf {
    let (ds, _) = planted_benchmark(&PlantedSpec { n, m, d, ..Default::default() }).unwrap();
    let path = dir.join(format!("data_{n}_{m}_{d}.csv"));
    save_csv(&ds, &path, None).unwrap();
    path
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture(tmp.path(), 300, 4, 6);
    let before = std::fs::read(&data).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = mcode(&["simulate", "--data", s(&data), "--n-outputs", "6", "--seed", "9", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["perturbed.csv", "perturbation.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read(&data).unwrap(), before);
    let header = std::fs::read_to_string(a.join("perturbed.csv")).unwrap();
    assert!(header.starts_with("# mcode "));
    assert!(header.contains("# seed 9") && header.contains("# config_sha256 "));
}

#[test]
fn simulate_on_2417_rows_flags_24() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture(tmp.path(), 2417, 2, 3);
    let out = tmp.path().join("sim");
    let o = mcode(&["simulate", "--data", s(&data), "--n-outputs", "3", "--ratio", "0.01", "--out", s(&out)]);
    assert!(o.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("perturbation.json")).unwrap()).unwrap();
    assert_eq!(json["outlier_rows"].as_array().unwrap().len(), 24);
    assert_eq!(json["rng"], "chacha20");
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture(tmp.path(), 50, 2, 3);
    let out = tmp.path().join("x");
    let cases: [&[&str]; 4] = [
        &["simulate", "--data", s(&data), "--n-outputs", "3", "--dim-fraction", "2.0", "--out", s(&out)],
        &["simulate", "--data", s(&data), "--out", s(&out)],
        &["detect", "--synthetic", "--methods", "mrw,bogus", "--out", s(&out)],
        &["frobnicate"],
    ];
    for args in cases {
        let o = mcode(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    assert!(!out.exists());
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "1.0,2.0,1\n3.0,oops,0\n").unwrap();
    let o = mcode(&["simulate", "--data", s(&bad), "--n-outputs", "1", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let missing = tmp.path().join("missing.csv");
    let o = mcode(&["fit", "--data", s(&missing), "--n-outputs", "1", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fitted_models_round_trip_and_record_arities() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture(tmp.path(), 200, 5, 4);
    let out = tmp.path().join("models");
    let o = mcode(&["fit", "--data", s(&data), "--n-outputs", "4", "--lambda", "0.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("full_conditional: feature arity 8, 4 trainings"), "{text}");
    assert!(text.contains("independent: feature arity 5, 4 trainings"), "{text}");

    let ds = load_csv(&data, 4).unwrap();
    for (mode, arity) in [(Mode::FullConditional, 8), (Mode::Independent, 5)] {
        let dir = out.join(mode.as_str());
        assert_eq!(load_manifest(&dir).unwrap().feature_arity, arity);
        let loaded = load_model(&dir).unwrap();
        let fresh = fit_mcode(&ds, mode, &LambdaPolicy::Fixed { lambda: 0.5 }).unwrap();
        assert_eq!(
            estimate_rho(&loaded, &ds).unwrap().values(),
            estimate_rho(&fresh, &ds).unwrap().values()
        );
    }
}

#[test]
fn cross_validated_fit_reports_more_trainings() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture(tmp.path(), 120, 3, 3);
    let out = tmp.path().join("cv");
    let o = mcode(&["fit", "--data", s(&data), "--n-outputs", "3", "--mode", "full", "--out", s(&out)]);
    assert!(o.status.success());
    // 3 factors x (5 folds x 5 grid values + 1 refit)
    assert!(stdout(&o).contains("78 trainings"), "{}", stdout(&o));
}

#[test]
fn eval_with_constant_rho_gives_equal_prod_and_rw() {
    let tmp = tempfile::tempdir().unwrap();
    let rho = tmp.path().join("rho.csv");
    let rows: String = (0..200).map(|_| "0.7,0.7,0.7\n").collect();
    std::fs::write(&rho, rows).unwrap();
    let truth = tmp.path().join("truth.json");
    std::fs::write(
        &truth,
        r#"{"rng":"chacha20","seed":0,"ratio":0.01,"dim_fraction":0.34,"outlier_rows":[3,150],"flipped_cells":[[3,0],[150,2]]}"#,
    )
    .unwrap();
    let o = mcode(&["eval", "--truth", s(&truth), "--rho", s(&rho)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let value = |label: &str| {
        text.lines()
            .find(|l| l.starts_with(label))
            .and_then(|l| l.split_whitespace().nth(1))
            .unwrap()
            .to_string()
    };
    assert_eq!(value("PROD"), value("RW"));
}

#[test]
fn detect_writes_artifacts_and_eval_reproduces_them() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture(tmp.path(), 400, 4, 6);
    let out = tmp.path().join("det");
    let o = mcode(&[
        "detect", "--data", s(&data), "--n-outputs", "6", "--lambda", "1", "--repeats", "2",
        "--k-lof", "20", "--k-lrw", "20", "--ratio", "0.02", "--dim-fraction", "0.5", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "report.txt", "records.jsonl", "curves.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = records.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines[0]["header"]["config_sha256"].is_string());
    assert_eq!(lines[0]["config"]["repeats"], 2);
    let trials: Vec<&serde_json::Value> = lines.iter().filter(|r| r["kind"] == "trial").collect();
    assert_eq!(trials.len(), 10);

    let rep = out.join("repeat_001");
    let recorded = trials
        .iter()
        .find(|r| r["repeat"] == 1 && r["method"] == "M-LRW")
        .unwrap()["atpar"]
        .as_f64()
        .unwrap();
    let o = mcode(&[
        "eval", "--truth", s(&rep.join("perturbation.json")), "--scores", s(&rep.join("scores_mlrw.csv")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o).lines().find(|l| l.starts_with("M-LRW")).unwrap().to_string();
    let got: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((got - recorded).abs() < 1e-6, "{got} vs {recorded}");

    // The echoed configuration reproduces the run.
    let again = tmp.path().join("again");
    let o = mcode(&["detect", "--config", s(&out.join("config.toml")), "--out", s(&again)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(out.join("records.jsonl")).unwrap(), std::fs::read(again.join("records.jsonl")).unwrap());
}
