use std::path::Path;
use std::process::{Command, Output};

use homp_lab::experiment::{parse_trajectory, CSV_HEADER};
use serde_json::Value;

const ROTATION: &str = r#"{
  "problem": {"kind": "bilinear", "n": 1, "matrix": [[1.0]]},
  "methods": [{"method": "homp_p2", "horizons": [64]}]
}"#;

const CUBIC_COMPARE: &str = r#"{
  "problem": {"kind": "cubic_reg", "n": 4, "rho": 1.0, "seed": 7},
  "methods": [
    {"method": "mp", "horizons": [16, 32, 64, 128, 256, 512]},
    {"method": "homp_p2", "horizons": [16, 32, 64, 128, 256, 512]}
  ]
}"#;

fn homp(args: &[&str], dir: &Path, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_homp"));
    cmd.args(args).current_dir(dir).env_remove("HOMP_OUT_DIR");
    if let Some(p) = env_out {
        cmd.env("HOMP_OUT_DIR", p);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn solve_rotation_writes_trajectory_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rot.json", ROTATION);
    let out = tmp.path().join("out");
    let o = homp(&["--quiet", "solve", "--config", &cfg, "--out", out.to_str().unwrap()], tmp.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 65);
    let s = summary(&out);
    assert!(s["runs"][0]["Gamma_T"].as_f64().unwrap() > 0.0);
    assert_eq!(s["runs"][0]["iterations"], 64);
    assert!(o.stdout.is_empty());
}

#[test]
fn compare_reports_two_slopes_matching_the_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cubic.json", CUBIC_COMPARE);
    let out = tmp.path().join("cmp");
    let o = homp(&["compare", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let slopes = s["slopes"].as_array().unwrap();
    assert_eq!(slopes.len(), 2);
    let slope = |m: &str| slopes.iter().find(|e| e["method"] == m).unwrap()["slope"].as_f64().unwrap();
    assert!(slope("homp_p2") < slope("mp"));

    for run in s["runs"].as_array().unwrap() {
        let text = std::fs::read_to_string(out.join(run["csv"].as_str().unwrap())).unwrap();
        let (rows, merit) = parse_trajectory(&text).unwrap();
        assert_eq!(rows as u64, run["iterations"].as_u64().unwrap());
        assert_eq!(merit, run["merit"].as_f64().unwrap());
    }

    let rate = homp(&["rate", out.to_str().unwrap()], tmp.path(), None);
    assert_eq!(rate.status.code(), Some(0));
    let refit: Value = serde_json::from_slice(&rate.stdout).unwrap();
    for e in refit.as_array().unwrap() {
        let m = e["method"].as_str().unwrap();
        assert_eq!(e["slope"].as_f64().unwrap(), slope(m), "{m}");
    }
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"problem": {"kind": "bilinear", "n": 1}, "methods": []}"#.to_string(),
        ROTATION.replace("\"horizons\"", "\"horizon\": 1, \"horizons\""),
        ROTATION.replace("[64]", "[64, 8]"),
        "{ not json".to_string(),
        ROTATION.replace("\"n\": 1", "\"n\": 0"),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.json"), text);
        let o = homp(&["solve", "--config", &cfg, "--out", "x"], tmp.path(), None);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
    }
    let o = homp(&["solve", "--config", "missing.json"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
    let o = homp(&["solve"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_field_message_names_the_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &ROTATION.replace("\"n\": 1", "\"n\": 1, \"size\": 3"));
    let o = homp(&["solve", "--config", &cfg], tmp.path(), None);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("size"), "{err}");
}

#[test]
fn numerical_failure_exits_with_status_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "div.json",
        r#"{"problem": {"kind": "cubic_reg", "n": 2, "seed": 3},
            "methods": [{"method": "mp", "horizons": [200], "gamma": 1000.0}]}"#,
    );
    let o = homp(&["--quiet", "solve", "--config", &cfg, "--out", "o"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mp T=200"));
}

#[test]
fn monitor_violation_exits_with_status_four() {
    let tmp = tempfile::tempdir().unwrap();
    // a step far beyond 1/L breaks the telescoping inequality
    let cfg = write_config(
        tmp.path(),
        "big.json",
        r#"{"problem": {"kind": "monotone_quadratic", "n": 4, "seed": 3},
            "methods": [{"method": "mp", "horizons": [50], "gamma": 3.0}]}"#,
    );
    let o = homp(&["--quiet", "check", "--config", &cfg, "--out", "o"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("telescoping bound"));
    // files are still written
    assert!(tmp.path().join("o/summary.json").exists());
}

#[test]
fn check_passes_on_a_healthy_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "q.json",
        r#"{"problem": {"kind": "quartic_reg", "n": 2, "seed": 4},
            "methods": [{"method": "homp_general", "order": 3, "horizons": [8, 16, 32]},
                        {"method": "homp_p2", "horizons": [8, 16, 32]}]}"#,
    );
    let o = homp(&["--quiet", "check", "--config", &cfg, "--out", "o"], tmp.path(), None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&tmp.path().join("o"));
    for run in s["runs"].as_array().unwrap() {
        assert_eq!(run["monitors"]["band"], "pass");
        assert_eq!(run["monitors"]["sum_bound"], "pass");
        assert_eq!(run["monitors"]["trajectory_bound"], "pass");
    }
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rot.json", ROTATION);
    let env_dir = tmp.path().join("from_env");
    let o = homp(&["--quiet", "solve", "--config", &cfg], tmp.path(), Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("trajectory.csv").exists());
    // the flag wins over the environment
    let flag_dir = tmp.path().join("from_flag");
    homp(&["--quiet", "solve", "--config", &cfg, "--out", flag_dir.to_str().unwrap()], tmp.path(), Some(&env_dir));
    assert!(flag_dir.join("trajectory.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cubic.json", CUBIC_COMPARE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    homp(&["--quiet", "compare", "--config", &cfg, "--out", a.to_str().unwrap(), "--jobs", "1"], tmp.path(), None);
    homp(&["--quiet", "compare", "--config", &cfg, "--out", b.to_str().unwrap(), "--jobs", "4"], tmp.path(), None);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn seed_flag_changes_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "q.json",
        r#"{"problem": {"kind": "monotone_quadratic", "n": 3, "seed": 1},
            "methods": [{"method": "mp", "horizons": [20]}]}"#,
    );
    homp(&["--quiet", "solve", "--config", &cfg, "--out", "s1"], tmp.path(), None);
    homp(&["--quiet", "solve", "--config", &cfg, "--out", "s2", "--seed", "2"], tmp.path(), None);
    assert_eq!(summary(&tmp.path().join("s2"))["problem"]["seed"], 2);
    assert_ne!(
        std::fs::read(tmp.path().join("s1/trajectory.csv")).unwrap(),
        std::fs::read(tmp.path().join("s2/trajectory.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let config = homp_lab::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        config.validate().unwrap();
        seen += 1;
    }
    assert!(seen >= 3);
}
