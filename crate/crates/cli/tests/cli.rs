use std::path::Path;
use std::process::{Command, Output};

fn auvgp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auvgp"))
        .args(args)
        .current_dir(dir)
        .env_remove("MOGP_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
schema_version = 1
seed = 3

[plant]
duration = 240.0

[narx]
n_max = 20
boundary = 120.0

[training]
restarts = 2
screening_iterations = 3

[training.optimizer]
max_iterations = 15

[protocol]
experiments = [3, 8]

[sensitivity]
durations = [120.0, 200.0]
"#;

#[test]
fn simulate_plant_writes_the_full_protocol_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = auvgp(
        &["simulate-plant", "--experiment", "1", "--duration", "2000", "--sample-dt", "1.5", "--out", "exp1.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("exp1.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, 1334);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1334 rows"));
}

#[test]
fn invalid_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = auvgp(&["simulate-plant", "--experiment", "9", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown experiment"));
    let o = auvgp(&["simulate-plant", "--experiment", "1", "--duration", "0", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[narx]\nlag = 0\n").unwrap();
    let o = auvgp(&["--config", "bad.toml", "protocol", "--out", "b"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("narx.lag"));
    let o = Command::new(env!("CARGO_BIN_EXE_auvgp"))
        .args(["simulate-plant", "--experiment", "1", "--out", "x.csv"])
        .current_dir(dir.path())
        .env("MOGP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_plant_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blowup.toml"), "[plant.simulation]\nintegrator_dt = 30.0\n").unwrap();
    let o = auvgp(
        &["--config", "blowup.toml", "simulate-plant", "--experiment", "4", "--duration", "3000", "--sample-dt", "30", "--out", "x.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn train_predict_and_free_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fit = TINY.replace("max_iterations = 15", "max_iterations = 300");
    std::fs::write(dir.path().join("tiny.toml"), fit).unwrap();
    let o = auvgp(&["simulate-plant", "--experiment", "4", "--duration", "90", "--out", "log.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for (model, extra) in [("m.json", None), ("b.json", Some("--baseline"))] {
        let mut args = vec!["--config", "tiny.toml", "train", "--data", "log.csv", "--model", model, "--boundary", "1e9"];
        args.extend(extra);
        let o = auvgp(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let pred = format!("pred_{model}.csv");
        let o = auvgp(&["predict", "--model", model, "--data", "log.csv", "--out", &pred], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let o = auvgp(&["--config", "tiny.toml", "free-run", "--model", model, "--data", "log.csv", "--out", "fr.csv"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    // Trained on the whole log: the first row is a training point.
    let pred = std::fs::read_to_string(dir.path().join("pred_m.json.csv")).unwrap();
    let fields: Vec<f64> = pred.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (truth, mean) = (fields[1], fields[2]);
    assert!((truth - mean).abs() < 1e-3 * truth.abs().max(1.0), "{truth} vs {mean}");

    let o = auvgp(&["predict", "--model", "missing.json", "--data", "log.csv", "--out", "p.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn protocol_is_reproducible_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    for out in ["a", "b"] {
        let o = auvgp(&["--config", "tiny.toml", "--seed", "7", "--threads", "1", "protocol", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["one_step_rmse", "free_run_rmse", "free_run_mae", "free_run_press"] {
        let a = std::fs::read(dir.path().join(format!("a/metrics/{name}.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b/metrics/{name}.csv"))).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 7"));
}

#[test]
fn sensitivity_accepts_a_duration_list() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let o = auvgp(&["--config", "tiny.toml", "sensitivity", "--durations", "100,160", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("s/sensitivity.csv")).unwrap();
    let mut durations: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    durations.dedup();
    assert_eq!(durations, ["100", "160"]);
    let o = auvgp(&["--config", "tiny.toml", "sensitivity", "--durations", "160,100", "--out", "s"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
