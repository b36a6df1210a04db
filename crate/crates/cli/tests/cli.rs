use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rmtcorr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmtcorr"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = rmtcorr(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_equicorrelated(dir: &Path, assets: &str, days: &str) {
    ok(
        dir,
        &[
            "synth",
            "--model",
            "equicorrelated",
            "--rho",
            "0.3",
            "--assets",
            assets,
            "--days",
            days,
            "--seed",
            "11",
            "--out",
            "prices.csv",
        ],
    );
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_then_analyze_gives_market_crf() {
    let dir = tempfile::tempdir().unwrap();
    synth_equicorrelated(dir.path(), "100", "500");
    ok(
        dir.path(),
        &[
            "analyze",
            "--prices",
            "prices.csv",
            "--min-observed-days",
            "100",
            "--step",
            "50",
        ],
    );
    let crf = dir.path().join("out/crf.csv");
    let h1: Vec<f64> = data_rows(&crf)
        .iter()
        .filter(|r| r[1] == "1")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(h1.len(), (500 - 400) / 50 + 1);
    for h in h1 {
        assert!((h - 0.307).abs() < 0.05, "h_1 = {h}");
    }
}

#[test]
fn step_sets_window_count() {
    let dir = tempfile::tempdir().unwrap();
    synth_equicorrelated(dir.path(), "8", "120");
    ok(
        dir.path(),
        &[
            "analyze",
            "--prices",
            "prices.csv",
            "--min-observed-days",
            "50",
            "--window",
            "30",
            "--step",
            "5",
        ],
    );
    let rows = data_rows(&dir.path().join("out/windows.csv"));
    assert_eq!(rows.len(), (120 - 30) / 5 + 1);
}

#[test]
fn environment_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth_equicorrelated(dir.path(), "5", "60");
    let out = Command::new(env!("CARGO_BIN_EXE_rmtcorr"))
        .current_dir(dir.path())
        .args(["analyze", "--prices", "prices.csv", "--min-observed-days", "10"])
        .env("RMTCORR_WINDOW", "20")
        .env("RMTCORR_STEP", "10")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_rows(&dir.path().join("out/windows.csv")).len(), (60 - 20) / 10 + 1);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmtcorr(dir.path(), &["analyze", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    synth_equicorrelated(dir.path(), "4", "40");
    let out = rmtcorr(
        dir.path(),
        &[
            "analyze",
            "--prices",
            "prices.csv",
            "--min-observed-days",
            "10",
            "--percentile",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmtcorr(dir.path(), &["analyze", "--prices", "missing.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    fs::write(
        dir.path().join("bad.csv"),
        "date,asset,price\n2020-01-02,A,10\n2020-01-03,A,oops\n",
    )
    .unwrap();
    let out = rmtcorr(dir.path(), &["ingest", "--prices", "bad.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3"), "{err}");
    assert!(err.starts_with("rmtcorr ingest:"), "{err}");

    synth_equicorrelated(dir.path(), "4", "40");
    let out = rmtcorr(
        dir.path(),
        &[
            "analyze",
            "--prices",
            "prices.csv",
            "--min-observed-days",
            "10",
            "--window",
            "41",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("41") && err.contains("40"), "{err}");
}

#[test]
fn ingest_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    synth_equicorrelated(dir.path(), "3", "20");
    ok(
        dir.path(),
        &[
            "ingest",
            "--prices",
            "prices.csv",
            "--min-observed-days",
            "5",
            "--out",
            "a.csv",
        ],
    );
    ok(
        dir.path(),
        &[
            "ingest",
            "--prices",
            "a.csv",
            "--min-observed-days",
            "5",
            "--out",
            "b.csv",
        ],
    );
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 3 * 21);
}

#[test]
fn full_run_reruns_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--model",
            "sector",
            "--assets",
            "16",
            "--sizes",
            "4,5,4",
            "--days",
            "90",
            "--seed",
            "3",
            "--out",
            "prices.csv",
            "--industries-out",
            "ind.csv",
        ],
    );
    ok(
        d,
        &[
            "run",
            "--prices",
            "prices.csv",
            "--industries",
            "ind.csv",
            "--industry-scheme",
            "inferred",
            "--min-observed-days",
            "20",
            "--window",
            "40",
            "--step",
            "3",
            "--repetitions",
            "3",
            "--seed",
            "9",
            "--volatility-window",
            "20",
            "--out-dir",
            "first",
        ],
    );
    ok(
        d,
        &["run", "--manifest", "first/manifest.json", "--rerun-out-dir", "second"],
    );
    let mut compared = 0;
    for entry in fs::read_dir(d.join("first")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            let other = d.join("second").join(p.file_name().unwrap());
            assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap(), "{}", p.display());
            compared += 1;
        }
    }
    assert!(compared >= 13);
    let industries = fs::read_to_string(d.join("first/industries.csv")).unwrap();
    assert!(industries.contains("S1,4,false"));

    ok(d, &["report", "--out-dir", "first", "--json"]);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("first/report.json")).unwrap()).unwrap();
    assert_eq!(doc["manifest"]["seed"], 9);
    assert!(doc["windows"][0]["threshold"].is_number());
    assert!(!doc["rankings"].as_array().unwrap().is_empty());
    ok(d, &["report", "--out-dir", "first"]);
    assert!(d.join("first/report.csv").exists());
}

#[test]
fn synth_regime_and_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--model",
            "regime",
            "--regime",
            "30:0.1,30:0.6",
            "--assets",
            "4",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(fs::read_to_string(d.join("r.csv")).unwrap().lines().count(), 1 + 4 * 61);
    fs::write(
        d.join("spec.json"),
        r#"{"n_assets":3,"n_days":10,"model":{"kind":"one_factor","beta_lo":0.5,"beta_hi":1.0,"noise":0.5},
            "seed":4,"volatility":0.02,"start":"2010-01-04"}"#,
    )
    .unwrap();
    ok(d, &["synth", "--spec", "spec.json", "--out", "s.csv"]);
    let s = fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(s.lines().nth(1).unwrap().starts_with("2010-01-01,A0001,"));
    let out = rmtcorr(
        d,
        &["synth", "--model", "equicorrelated", "--rho", "1.5", "--out", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}
