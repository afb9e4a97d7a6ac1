use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use castaway::config::Config;
use castaway::sensor::DetectionModel;
use castaway::world::ScenarioGenerator;
use serde_json::Value;
use tempfile::TempDir;

fn castaway(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_castaway"))
        .args(args)
        .env_remove("CASTAWAY_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Default config on a freshly drawn scenario cut to `duration` steps.
fn short_config(dir: &Path, duration: usize) -> PathBuf {
    let mut sc = ScenarioGenerator::default().generate(11);
    sc.duration = duration;
    let path = dir.join("config.json");
    fs::write(&path, Config::with_scenario(sc).to_json()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_csv_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = short_config(tmp.path(), 20);
    let out = tmp.path().join("run");
    let o = castaway(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "42",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("episode.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# seed=42"));
    let embedded: Value =
        serde_json::from_str(lines.next().unwrap().strip_prefix("# config=").unwrap()).unwrap();
    let resolved = Config::from_json(&embedded.to_string()).unwrap();
    assert_eq!(resolved.scenario.duration, 20);
    assert!(lines.next().unwrap().starts_with("step,time_s,target_id,"));
    assert_eq!(lines.count(), 20 * 4);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["policy"], "mpc");
    assert_eq!(summary["config"], embedded);
    assert_eq!(summary["summary"]["steps"], 20);
    assert!(!out.join("trace.svg").exists());
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = short_config(tmp.path(), 15);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = castaway(&[
            "simulate",
            "--config",
            s(&cfg),
            "--seed",
            "42",
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0);
        fs::read(out.join("episode.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn plots_leave_the_csv_unchanged() {
    let tmp = TempDir::new().unwrap();
    let cfg = short_config(tmp.path(), 15);
    let plain = tmp.path().join("plain");
    let plotted = tmp.path().join("plotted");
    assert_eq!(
        code(&castaway(&[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&plain)
        ])),
        0
    );
    assert_eq!(
        code(&castaway(&[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&plotted),
            "--plots"
        ])),
        0
    );
    assert_eq!(
        fs::read(plain.join("episode.csv")).unwrap(),
        fs::read(plotted.join("episode.csv")).unwrap()
    );
    for name in ["trajectory.svg", "trace.svg"] {
        let svg = fs::read_to_string(plotted.join(name)).unwrap();
        assert!(
            svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"),
            "{name}"
        );
        assert!(svg.contains("<polyline"), "{name}");
    }
}

#[test]
fn malformed_config_fails_without_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{\n  \"schema_version\": 1,\n  \"scenario\": [\n}").unwrap();
    let out = tmp.path().join("run");
    let o = castaway(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    assert!(!out.exists());
}

#[test]
fn invalid_value_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = Config::default();
    cfg.planner.horizon = 0;
    let path = tmp.path().join("cfg.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("run");
    let o = castaway(&["simulate", "--config", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`planner`"));
    assert!(!out.exists());
}

#[test]
fn usage_and_io_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&castaway(&[
            "simulate",
            "--policy",
            "zigzag",
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(code(&castaway(&["teleport"])), 2);
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        code(&castaway(&[
            "simulate",
            "--config",
            s(&missing),
            "--out",
            s(&out)
        ])),
        4
    );
    assert!(!out.exists());
}

#[test]
fn oversized_timing_grid_is_a_size_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("timing");
    let o = castaway(&[
        "timing",
        "--horizons",
        "3,200000",
        "--castaways",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 6);
    assert!(!out.exists());
}

#[test]
fn timing_writes_one_cell_per_pair() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("timing");
    let o = castaway(&[
        "timing",
        "--horizons",
        "2,3",
        "--castaways",
        "1",
        "--solves",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 2);
    assert!(v["config"].is_object() && v["seed"].is_u64());
}

/// Counts generated exactly from the default detection model.
fn synthetic_table(dir: &Path) -> PathBuf {
    let m = DetectionModel::default();
    let mut text = String::from("altitude_m,tp,fn\n");
    for i in 1..=12 {
        let z = 10.0 * i as f64;
        let tp = (m.prob(z) * 10_000.0).round() as u64;
        text.push_str(&format!("{z},{tp},{}\n", 10_000 - tp));
    }
    let path = dir.join("detections.csv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn fit_recovers_the_model_and_embeds_it_in_the_config() {
    let tmp = TempDir::new().unwrap();
    let table = synthetic_table(tmp.path());
    let out = tmp.path().join("fit");
    let o = castaway(&["fit", "--table", s(&table), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(out.join("detection_model.json")).unwrap())
            .unwrap();
    let model: DetectionModel = serde_json::from_value(v["model"].clone()).unwrap();
    assert_eq!(model.prob(10.0), 1.0);
    assert_eq!(model.alpha1, 10.0);
    assert_eq!(model.p_min, 0.25);

    // The embedded config is a valid input for the other commands.
    let cfg = Config::from_json(&v["config"].to_string()).unwrap();
    assert_eq!(cfg.sensor.detection, model);
}

#[test]
fn degenerate_table_is_a_fit_error() {
    let tmp = TempDir::new().unwrap();
    let table = tmp.path().join("one.csv");
    fs::write(&table, "altitude_m,tp,fn\n10,5,5\n").unwrap();
    let out = tmp.path().join("fit");
    assert_eq!(
        code(&castaway(&["fit", "--table", s(&table), "--out", s(&out)])),
        5
    );
    assert!(!out.exists());
}

#[test]
fn gen_scenario_round_trips_through_simulate() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("scenario");
    let o = castaway(&[
        "gen-scenario",
        "--seed",
        "5",
        "--castaways",
        "2",
        "--duration",
        "12",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = Config::from_json(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg.scenario.seed, 5);
    assert_eq!(cfg.scenario.castaway_count(), 2);

    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    assert!(truth.starts_with("# seed=5\n# config="));
    assert_eq!(
        truth.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 12 * 2
    );

    let run = tmp.path().join("run");
    let o = castaway(&[
        "simulate",
        "--config",
        s(&out.join("config.json")),
        "--policy",
        "hover:60",
        "--out",
        s(&run),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn mc_writes_one_row_per_policy() {
    let tmp = TempDir::new().unwrap();
    let cfg = short_config(tmp.path(), 10);
    let out = tmp.path().join("mc");
    let o = castaway(&[
        "mc",
        "--config",
        s(&cfg),
        "--runs",
        "3",
        "--seed",
        "8",
        "--policy",
        "mpc",
        "--policy",
        "hover:100",
        "--policy",
        "lawnmower",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("mc.json")).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["policy"].as_str().unwrap()).collect();
    assert_eq!(names, ["mpc", "hover:100", "lawnmower:40"]);
    assert!(rows
        .iter()
        .all(|r| r["per_run"].as_array().unwrap().len() == 3));
    assert_eq!(v["seed"], 8);
    assert_eq!(v["base_seed"], 8);
}
