use std::collections::HashMap;
use std::path::Path;

use auvgp::mogp::*;
use auvgp::narx::*;
use auvgp::plant::*;
use auvgp::runner::*;
use faer::MatRef;
use proptest::prelude::*;

fn plant_log(experiment: u32, duration: f64) -> TrajectoryLog {
    let plant = Plant::new(PlantCoefficients::default()).unwrap();
    let exp = Experiment::from_number(experiment).unwrap();
    let sched = InputSchedule::for_experiment(exp, &ExcitationConfig::default(), duration);
    run_experiment(&plant, &sched, &SimulationSettings::default(), duration, 1.5).unwrap()
}

fn key(x: MatRef<'_, f64>, i: usize) -> Vec<u64> {
    (0..x.ncols()).map(|k| x[(i, k)].to_bits()).collect()
}

/// Memorizes the one-step map on every regressor of a log.
struct LookupModel {
    norm: NormalizationMap,
    lag: usize,
    table: HashMap<Vec<u64>, [f64; N_OUTPUTS]>,
}

impl LookupModel {
    fn of(log: &TrajectoryLog, lag: usize) -> Self {
        let norm = build_normalization(log, None).unwrap();
        let ds = embed(log, lag, &norm).unwrap();
        let table = (0..ds.len()).map(|i| (key(ds.x.as_ref(), i), ds.target(i))).collect();
        Self { norm, lag, table }
    }
}

impl Predictor for LookupModel {
    fn outputs(&self) -> usize {
        N_OUTPUTS
    }

    fn dim(&self) -> usize {
        regressor_dim(self.lag)
    }

    fn normalization(&self) -> Option<&NormalizationMap> {
        Some(&self.norm)
    }

    fn noise_variance(&self, _: usize) -> f64 {
        0.0
    }

    fn predict_batch(&self, x: MatRef<'_, f64>) -> Vec<Prediction> {
        self.predict_mean_batch(x)
            .into_iter()
            .map(|mean| Prediction {
                mean,
                variance: vec![0.0; N_OUTPUTS],
                clamped: 0,
            })
            .collect()
    }

    fn predict_mean_batch(&self, x: MatRef<'_, f64>) -> Vec<Vec<f64>> {
        (0..x.nrows())
            .map(|i| self.table.get(&key(x, i)).expect("regressor outside the memorized set").to_vec())
            .collect()
    }
}

/// Predicts `gain` times the lag-1 outputs.
struct GainModel {
    norm: NormalizationMap,
    gain: f64,
}

impl Predictor for GainModel {
    fn outputs(&self) -> usize {
        N_OUTPUTS
    }

    fn dim(&self) -> usize {
        regressor_dim(3)
    }

    fn normalization(&self) -> Option<&NormalizationMap> {
        Some(&self.norm)
    }

    fn noise_variance(&self, _: usize) -> f64 {
        1e-4
    }

    fn predict_batch(&self, x: MatRef<'_, f64>) -> Vec<Prediction> {
        self.predict_mean_batch(x)
            .into_iter()
            .map(|mean| Prediction {
                mean,
                variance: vec![0.0; N_OUTPUTS],
                clamped: 0,
            })
            .collect()
    }

    fn predict_mean_batch(&self, x: MatRef<'_, f64>) -> Vec<Vec<f64>> {
        (0..x.nrows())
            .map(|i| (0..N_OUTPUTS).map(|q| self.gain * x[(i, regressor_column(q, 1, 3))]).collect())
            .collect()
    }
}

fn small_model(log: &TrajectoryLog) -> (TrainedModel, RegressionDataset) {
    let norm = build_normalization(log, Some(150.0)).unwrap();
    let ds = embed(log, 3, &norm).unwrap();
    let (train, validation) = split(&ds, 150.0).unwrap();
    let train = subsample(&train, 25);
    let cfg = TrainConfig {
        restarts: 1,
        screening_iterations: 0,
        optimizer: LbfgsSettings {
            max_iterations: 25,
            ..Default::default()
        },
        ..Default::default()
    };
    let model = train_shared(train.x.as_ref(), train.y.as_ref(), Some(norm), &cfg).unwrap();
    (model, validation)
}

#[test]
fn hand_computed_residual_metrics() {
    let m = ChannelMetrics::from_residuals([1.0, -1.0]);
    assert_eq!((m.rmse, m.mae, m.press, m.count), (1.0, 1.0, 2.0, 2));
    let zero = MetricsReport::from_residuals(Horizon::OneStep, &[[0.0; N_OUTPUTS]; 4], None);
    assert_eq!(zero.aggregate, AggregateMetrics { rmse: 0.0, mae: 0.0, press: 0.0 });
    assert_eq!(zero.coverage, None);
}

#[test]
fn coverage_counts_residuals_inside_two_sigma() {
    let residuals = [[0.5; N_OUTPUTS], [1.9; N_OUTPUTS], [-2.5; N_OUTPUTS], [3.0; N_OUTPUTS]];
    let sd = [[1.0; N_OUTPUTS]; 4];
    let r = MetricsReport::from_residuals(Horizon::OneStep, &residuals, Some(&sd));
    assert_eq!(r.coverage, Some(0.5));
}

proptest! {
    #[test]
    fn metric_identities_hold(residuals in prop::collection::vec(-10.0f64..10.0, 1..60)) {
        let m = ChannelMetrics::from_residuals(residuals.iter().copied());
        let n = residuals.len() as f64;
        prop_assert!((m.press - n * m.rmse * m.rmse).abs() <= 1e-9 * m.press.max(1.0));
        prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
        prop_assert!(m.rmse >= 0.0 && m.mae >= 0.0);
    }
}

#[test]
fn exact_copy_of_the_plant_map_reproduces_the_log() {
    let log = plant_log(4, 200.0);
    let model = LookupModel::of(&log, 3);
    let run = free_run_simulate(&model, &log, 3, &FreeRunOptions::default()).unwrap();
    assert_eq!(run.mean.len(), log.len() - 3);
    assert_eq!(run.mean, run.truth);
    assert_eq!(run.report.aggregate.rmse, 0.0);
}

#[test]
fn lag_buffer_hands_over_from_truth_to_predictions() {
    let log = plant_log(4, 100.0);
    let model = LookupModel::of(&log, 3);
    let opts = FreeRunOptions {
        trace: true,
        ..Default::default()
    };
    let start = 10;
    let run = free_run_simulate(&model, &log, start, &opts).unwrap();
    let expected = |k: usize| -> Vec<(usize, bool)> { (1..=3).map(|j| (k - j, k - j >= start)).collect() };
    for step in &run.trace[..6] {
        assert_eq!(step.sources, expected(step.index));
    }
    assert_eq!(run.trace[0].sources, vec![(9, false), (8, false), (7, false)]);
    assert_eq!(run.trace[1].sources, vec![(10, true), (9, false), (8, false)]);
    assert_eq!(run.trace[2].sources, vec![(11, true), (10, true), (9, false)]);
    assert!(run.trace[3..].iter().all(|s| s.sources.iter().all(|(_, p)| *p)));
}

#[test]
fn teacher_forced_free_run_matches_one_step_prediction() {
    let log = plant_log(4, 300.0);
    let (model, _) = small_model(&log);
    let norm = model.norm.clone().unwrap();
    let full = embed(&log, 3, &norm).unwrap();
    let opts = FreeRunOptions {
        teacher_forcing: true,
        ..Default::default()
    };
    let run = free_run_simulate(&model, &log, 3, &opts).unwrap();
    let (report, preds) = one_step_validate(&model, &full).unwrap();
    assert_eq!(run.mean.len(), preds.len());
    for (m, p) in run.mean.iter().zip(&preds) {
        assert_eq!(m.to_vec(), p.mean);
    }
    assert_eq!(run.report.aggregate, report.aggregate);
    assert_eq!(run.report.coverage, report.coverage);
}

#[test]
fn mismatched_normalization_is_rejected() {
    let log = plant_log(4, 300.0);
    let (model, validation) = small_model(&log);
    let other = embed(&log, 3, &build_normalization(&log, None).unwrap()).unwrap();
    assert!(matches!(one_step_validate(&model, &other), Err(RunnerError::NormalizationMismatch)));
    let (report, preds) = one_step_validate(&model, &validation).unwrap();
    assert_eq!(preds.len(), validation.len());
    assert!(report.coverage.is_some());
    let mut bare = model;
    bare.norm = None;
    assert!(matches!(one_step_validate(&bare, &validation), Err(RunnerError::MissingNormalization)));
}

#[test]
fn runaway_rollout_reports_divergence() {
    let log = plant_log(4, 300.0);
    let norm = build_normalization(&log, None).unwrap();
    let model = GainModel { norm, gain: 1.5 };
    match free_run_simulate(&model, &log, 3, &FreeRunOptions::default()) {
        Err(RunnerError::DivergenceDetected { index, steps, value }) => {
            assert!(value.abs() > 10.0);
            assert_eq!(index, 3 + steps);
            assert!(steps > 0 && steps < 20, "diverged after {steps} steps");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    let stable = GainModel {
        norm: build_normalization(&log, None).unwrap(),
        gain: 0.5,
    };
    assert!(free_run_simulate(&stable, &log, 3, &FreeRunOptions::default()).is_ok());
}

#[test]
fn invalid_start_is_rejected() {
    let log = plant_log(4, 60.0);
    let model = LookupModel::of(&log, 3);
    for start in [0, 2, log.len()] {
        assert!(matches!(
            free_run_simulate(&model, &log, start, &FreeRunOptions::default()),
            Err(RunnerError::InvalidStart { .. })
        ));
    }
}

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.plant.duration = 240.0;
    cfg.narx.boundary = 120.0;
    cfg.narx.n_max = 20;
    cfg.training.restarts = 2;
    cfg.training.screening_iterations = 3;
    cfg.training.optimizer.max_iterations = 15;
    cfg.protocol.experiments = vec![2, 6];
    cfg.sensitivity.durations = vec![120.0, 200.0];
    cfg
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn protocol_bundle_is_reproducible_and_laid_out_as_tables() {
    let cfg = tiny_config();
    let a = run_protocol(&cfg).unwrap();
    let b = run_protocol(&cfg).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = write_protocol_bundle(&a, da.path(), 1).unwrap();
    write_protocol_bundle(&b, db.path(), 1).unwrap();
    let (ta, tb) = (read_tree(da.path()), read_tree(db.path()));
    assert_eq!(ta.len(), tb.len());
    for ((na, ca), (nb, cb)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between runs");
    }
    assert!(fa.files.iter().any(|f| f == "manifest.json"));
    assert!(ta.iter().all(|(n, _)| n != "timings.json"));

    let table = a.table(Horizon::FreeRun, Metric::Rmse);
    let labels: Vec<&str> = table.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["2", "6", "average", "std_dev"]);
    let csv = std::fs::read_to_string(da.path().join("metrics/free_run_rmse.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("experiment,name,mogp,independent\n"));
}

#[test]
fn different_seeds_change_the_restarts() {
    let mut cfg = tiny_config();
    cfg.protocol.experiments = vec![2];
    let a = run_protocol(&cfg).unwrap();
    cfg.seed = 17;
    let b = run_protocol(&cfg).unwrap();
    let nll = |r: &ProtocolReport| {
        r.completed().next().unwrap().1.run(ModelId::Mogp).training.negative_log_likelihood
    };
    assert_ne!(nll(&a), nll(&b));
}

#[test]
fn sensitivity_sweep_covers_every_duration_and_model() {
    let mut cfg = tiny_config();
    cfg.sensitivity.durations = vec![60.0, 200.0];
    let sweep = sensitivity_sweep(&cfg).unwrap();
    assert_eq!(sweep.durations(), vec![60.0, 200.0]);
    for d in [60.0, 200.0] {
        for m in ModelId::ALL {
            let row = sweep.get(d, m).unwrap();
            assert!(row.error.is_some() || row.one_step.is_some(), "{d} {m:?}");
        }
    }
    assert!(sweep.get(60.0, ModelId::Mogp).unwrap().train_rows < cfg.narx.n_max);
    assert_eq!(sweep.get(200.0, ModelId::Mogp).unwrap().train_rows, cfg.narx.n_max);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = tiny_config();
    let text = cfg.to_toml_string();
    let back = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(back.to_toml_string(), text);
    assert_eq!(back.protocol.experiments, vec![2, 6]);
    assert!(matches!(
        RunConfig::from_toml_str("[narx]\nlag = 0\n"),
        Err(RunnerError::Config(_))
    ));
    assert!(matches!(
        RunConfig::from_toml_str("[narx]\nunknown_key = 1\n"),
        Err(RunnerError::Config(_))
    ));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, &text).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap().to_toml_string(), text);
}

#[test]
fn trajectory_csv_is_in_raw_units() {
    let log = plant_log(4, 60.0);
    let norm = build_normalization(&log, None).unwrap();
    let truth: Vec<[f64; N_OUTPUTS]> = (3..6).map(|i| std::array::from_fn(|q| norm.normalize(q, log.outputs[i][q]))).collect();
    let series = Series {
        t: log.t[3..6].to_vec(),
        truth: truth.clone(),
        mean: truth,
        std_dev: vec![[0.0; N_OUTPUTS]; 3],
    };
    let csv = trajectory_csv(&series, &norm);
    let first = csv.lines().nth(1).unwrap();
    let u: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
    assert!((u - log.outputs[3][0]).abs() < 1e-8 * log.outputs[3][0].abs().max(1.0));
}
