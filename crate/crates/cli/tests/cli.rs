use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_metroepi");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, json: &str) -> String {
    fs::write(dir.join("config.json"), json).unwrap();
    "config.json".to_string()
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path.join("manifest.json")).unwrap()).unwrap()
}

const SMALL: &str = r#"{
    "synth": {"locations": 20, "daily_trips": 20000},
    "sweep": {"i0": [1], "periods": [3, 16], "horizon_days": 60}
}"#;

#[test]
fn pipeline_produces_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), SMALL);
    let out = run(tmp.path(), &["--config", &cfg, "--out", "out", "pipeline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = tmp.path().join("out");
    for stage in ["synth", "ingest", "matrices", "sweep", "network", "communities", "activity", "report"] {
        let m = manifest(&root.join(stage));
        assert_eq!(m["command"], stage);
        assert_eq!(m["tool"], "metroepi");
        assert_eq!(m["seed"], 1);
        assert_eq!(m["config"]["synth"]["locations"], 20);
        let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
        assert!(!listed.is_empty(), "{stage} lists no outputs");
        for p in listed {
            assert!(root.join(stage).join(p).is_file(), "{stage}/{p} missing");
        }
        if stage != "synth" {
            assert!(!m["inputs"].as_array().unwrap().is_empty(), "{stage} lists no inputs");
        }
    }
    assert_eq!(csv_rows(&root.join("report/risk_summary.csv")), 20);
    assert_eq!(csv_rows(&root.join("sweep/summary.csv")), 20);
    assert_eq!(csv_rows(&root.join("sweep/scenarios.csv")), 20 * 2 * 2);
    assert_eq!(csv_rows(&root.join("report/weekly_network.csv")), 7);
    assert_eq!(csv_rows(&root.join("communities/partitions.csv")), 28 * 20);
    assert_eq!(csv_rows(&root.join("network/centrality.csv")), 20);
    assert_eq!(manifest(&root.join("sweep"))["details"]["failed"].as_array().unwrap().len(), 0);
    let leftovers: Vec<_> = fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".partial"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn simulate_rejects_i0_above_population() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(
        tmp.path(),
        r#"{"synth": {"locations": 9, "daily_trips": 5000}, "simulate": {"i0": 1e9}}"#,
    );
    for cmd in ["synth", "ingest", "matrices"] {
        assert!(run(tmp.path(), &["--config", &cfg, "--out", "out", cmd]).status.success());
    }
    let out = run(tmp.path(), &["--config", &cfg, "--out", "out", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("i0"), "{err}");
    assert!(!tmp.path().join("out/simulate").exists());
    assert!(!tmp.path().join("out/simulate.partial").exists());
}

#[test]
fn simulate_writes_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(
        tmp.path(),
        r#"{"synth": {"locations": 9, "daily_trips": 5000},
            "simulate": {"seed_location": 4, "seed_period": 16, "i0": 10, "rate": {"r0": 3.0}, "horizon_days": 30}}"#,
    );
    for cmd in ["synth", "ingest", "matrices", "simulate"] {
        let out = run(tmp.path(), &["--config", &cfg, "--out", "out", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let dir = tmp.path().join("out/simulate");
    assert_eq!(csv_rows(&dir.join("arrivals.csv")), 9);
    assert_eq!(csv_rows(&dir.join("phi.csv")), 30);
    let m = manifest(&dir);
    assert_eq!(m["details"]["scenario"]["seed_location"], 4);
    assert!(m["details"]["final_size"].as_f64().unwrap() >= 10.0);
}

#[test]
fn missing_upstream_names_command() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, needs) in [("ingest", "synth"), ("matrices", "ingest"), ("report", "sweep")] {
        let out = run(tmp.path(), &["--out", "out", cmd]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("metroepi {needs}")), "{cmd}: {err}");
        assert!(!tmp.path().join("out").join(cmd).exists());
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["--bogus", "synth"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    let cfg = small_config(tmp.path(), r#"{"sweeep": {}}"#);
    assert_eq!(run(tmp.path(), &["--config", &cfg, "synth"]).status.code(), Some(1));
    let cfg = small_config(tmp.path(), r#"{"stations": "nope.csv", "districts": "nope.csv", "trips": "nope.csv"}"#);
    assert_eq!(run(tmp.path(), &["--config", &cfg, "ingest"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn raw_inputs_with_bad_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), r#"{"synth": {"locations": 9, "daily_trips": 2000}}"#);
    assert!(run(tmp.path(), &["--config", &cfg, "--out", "gen", "synth"]).status.success());
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    for f in ["stations.csv", "districts.csv", "trips.csv"] {
        fs::copy(tmp.path().join("gen/synth").join(f), data.join(f)).unwrap();
    }
    let mut trips = fs::read_to_string(data.join("trips.csv")).unwrap();
    trips.push_str("x,2015-04-14T08:00,99,2015-04-14T08:30,1,3.0\n");
    trips.push_str("y,2015-04-14T08:00,1,2015-04-14T07:30,2,3.0\n");
    fs::write(data.join("trips.csv"), trips).unwrap();
    let cfg = small_config(
        &data,
        r#"{"stations": "stations.csv", "districts": "districts.csv", "trips": "trips.csv"}"#,
    );
    let out = run(tmp.path(), &["--config", &format!("data/{cfg}"), "--out", "out", "ingest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/ingest");
    assert_eq!(csv_rows(&dir.join("rejections.csv")), 2);
    let m = manifest(&dir);
    assert_eq!(m["details"]["rejected"], 2);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_failures_listed_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    // Only the centre of a 3x3 centre-heavy grid holds 50000 people; both
    // default rates fail at the other 8 seeds.
    let cfg = small_config(
        tmp.path(),
        r#"{"synth": {"locations": 9, "daily_trips": 5000},
            "sweep": {"i0": [1, 50000], "periods": [0], "horizon_days": 20}}"#,
    );
    for cmd in ["synth", "ingest", "matrices", "sweep"] {
        let out = run(tmp.path(), &["--config", &cfg, "--out", "out", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let m = manifest(&tmp.path().join("out/sweep"));
    let failed = m["details"]["failed"].as_array().unwrap();
    assert_eq!(failed.len(), 2 * 8);
    assert_eq!(m["details"]["succeeded"].as_u64().unwrap() + failed.len() as u64, 2 * 2 * 9);
    assert!(failed[0]["error"].as_str().unwrap().contains("i0"));
}

#[test]
fn seed_flag_changes_synthetic_city() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), r#"{"synth": {"locations": 9, "daily_trips": 2000}}"#);
    assert!(run(tmp.path(), &["--config", &cfg, "--out", "a", "synth"]).status.success());
    assert!(run(tmp.path(), &["--config", &cfg, "--out", "b", "--seed", "7", "synth"]).status.success());
    let a = fs::read(tmp.path().join("a/synth/trips.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/synth/trips.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(manifest(&tmp.path().join("b/synth"))["seed"], 7);
}
