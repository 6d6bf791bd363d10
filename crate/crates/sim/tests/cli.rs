use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mpgps-sim"));
    c.env_remove("MPGPS_SEED").env_remove("MPGPS_OUT");
    c
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn data_rows(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().count() - 1
}

#[test]
fn minimal_scenario_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .arg("run")
        .arg(scenarios().join("minimal.json"))
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(data_rows(&out_dir.join("runs.csv")), 1);
    assert_eq!(data_rows(&out_dir.join("summary.csv")), 1);
    for f in [
        "fig2_power_vs_M.csv",
        "fig3_delay_vs_M.csv",
        "plots.gp",
        "scenario.resolved.json",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let runs = std::fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert!(runs.lines().next().unwrap().starts_with("config_hash"));
}

#[test]
fn no_valid_grid_point_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{ "system": { "users": 4 }, "run": { "modes": ["ompgps"] },
             "sweep": { "m": [4], "u": [2] } }"#,
    );
    let out = run(bin().arg("run").arg(&cfg).arg("--out").arg(&out_dir));
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
}

#[test]
fn malformed_and_unknown_fields_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{ not json");
    assert_eq!(run(bin().arg("run").arg(&broken)).status.code(), Some(1));
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{ "system": { "userz": 4 } }"#,
    );
    assert_eq!(run(bin().arg("run").arg(&unknown)).status.code(), Some(1));
    assert_eq!(
        run(bin().arg("run").arg(dir.path().join("missing.json")))
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(bin().arg("frobnicate")).status.code(), Some(1));
}

const SMALL_BOUNDS: &str = r#"{
  "system": { "users": 4, "deadline_s": null },
  "traffic": { "kind": "poisson", "rate_bps": 96000 },
  "run": { "modes": ["pgps", "mpgps", "ompgps"], "horizon_s": 4.0, "error_free": true, "phy": false },
  "sweep": { "m": [1, 2], "u": [2] }
}"#;

#[test]
fn check_bounds_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bounds.json", SMALL_BOUNDS);
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .arg("check-bounds")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all bounds PASS"));
    assert!(text.contains("single-server reduction"));
    assert!(text.contains("aggregate-lag"));
    assert!(out_dir.join("bounds.csv").exists());
    assert!(out_dir.join("bounds.txt").exists());
}

#[test]
fn start_time_ranking_is_flagged_as_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fault.json",
        r#"{
          "system": { "users": 4, "weights": [1, 1, 1, 100], "deadline_s": null },
          "traffic": { "kind": "trace", "arrivals": [
            { "time_s": 0, "flow": 0 }, { "time_s": 0, "flow": 1 },
            { "time_s": 0, "flow": 2 }, { "time_s": 0, "flow": 3 } ] },
          "run": { "modes": ["pgps"], "horizon_s": 0.1, "error_free": true, "phy": false,
                   "selection_key": "virtual_start" },
          "sweep": { "m": [1] }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .arg("check-bounds")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    let report = std::fs::read_to_string(out_dir.join("bounds.txt")).unwrap();
    let delay = report
        .lines()
        .find(|l| l.trim_start().starts_with("delay"))
        .unwrap();
    assert!(delay.ends_with("FAIL"), "{delay}");
}

#[test]
fn sweep_axes_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .arg("sweep")
        .arg(scenarios().join("minimal.json"))
        .args([
            "--axis",
            "M=1:3",
            "--mode",
            "mpgps,ampgps",
            "--replications",
            "2",
            "--seed",
            "5",
        ])
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(data_rows(&out_dir.join("runs.csv")), 2 * 3 * 2);
    let runs = std::fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert!(runs.contains(",5,") && runs.contains(",6,"));
    assert_eq!(
        run(bin().arg("sweep").arg(scenarios().join("minimal.json")))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn environment_overrides_file_and_cli_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("env");
    let out = run(bin()
        .arg("run")
        .arg(scenarios().join("minimal.json"))
        .env("MPGPS_OUT", &env_out)
        .env("MPGPS_SEED", "42"));
    assert_eq!(out.status.code(), Some(0));
    let resolved = std::fs::read_to_string(env_out.join("scenario.resolved.json")).unwrap();
    assert!(resolved.contains("\"seed\": 42"));

    let cli_out = dir.path().join("cli");
    let out = run(bin()
        .arg("run")
        .arg(scenarios().join("minimal.json"))
        .arg("--out")
        .arg(&cli_out)
        .args(["--seed", "7"])
        .env("MPGPS_OUT", &env_out)
        .env("MPGPS_SEED", "42"));
    assert_eq!(out.status.code(), Some(0));
    let resolved = std::fs::read_to_string(cli_out.join("scenario.resolved.json")).unwrap();
    assert!(resolved.contains("\"seed\": 7"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "det.json",
        r#"{ "system": { "users": 4, "concurrency": 2 },
             "traffic": { "kind": "poisson", "rate_bps": 60000 },
             "run": { "modes": ["mpgps", "ompgps"], "horizon_s": 0.5, "record_events": true },
             "sweep": { "u": [3] }, "replications": 2 }"#,
    );
    let dirs = [dir.path().join("a"), dir.path().join("b")];
    for (d, jobs) in dirs.iter().zip(["1", "2"]) {
        assert_eq!(
            run(bin()
                .arg("run")
                .arg(&cfg)
                .arg("--out")
                .arg(d)
                .args(["--jobs", jobs]))
            .status
            .code(),
            Some(0)
        );
    }
    for f in [
        "runs.csv",
        "summary.csv",
        "events/point0_rep0.csv",
        "events/point1_rep1.csv",
    ] {
        let a = std::fs::read(dirs[0].join(f)).unwrap();
        let b = std::fs::read(dirs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn schema_command_prints_json() {
    let out = run(bin().arg("schema"));
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["properties"]["system"].is_object());
}
