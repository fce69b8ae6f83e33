//! `auvgp`: simulate the vehicle, train NARX models, validate them and run
//! the identification protocol.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auvgp::mogp::{train_independent_baseline, train_shared, AnyModel, MogpError, Predictor, TrainConfig};
use auvgp::narx::{build_normalization, embed, split, subsample, NarxError, NormalizationMap, CHANNEL_NAMES, N_CHANNELS};
use auvgp::parallel::configure_threads;
use auvgp::plant::{run_experiment, Experiment, InputSchedule, PlantError, TrajectoryLog};
use auvgp::runner::{
    free_run_simulate, observation_std, one_step_validate, run_protocol, sensitivity_sweep, trajectory_csv, write_protocol_bundle,
    write_sensitivity_bundle, Horizon, Metric, MetricsReport, ModelId, RunConfig, RunnerError, Series,
};
use clap::{Args, Parser, Subcommand};

const THREADS_ENV: &str = "MOGP_THREADS";

#[derive(Parser)]
#[command(name = "auvgp", version, about = "Multi-output GP identification of AUV dynamics")]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to MOGP_THREADS, then the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one experiment and write the trajectory CSV.
    SimulatePlant {
        #[arg(long)]
        experiment: u32,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        sample_dt: Option<f64>,
    },
    /// Train a model on a trajectory CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model file to write.
        #[arg(long)]
        model: PathBuf,
        /// Last training time in seconds (default: narx.boundary, or the whole log if that is past its end).
        #[arg(long)]
        boundary: Option<f64>,
        /// Train the decoupled per-output baseline instead.
        #[arg(long)]
        baseline: bool,
    },
    /// One-step predictions over a trajectory CSV.
    Predict {
        #[command(flatten)]
        io: ModelData,
    },
    /// Closed-loop simulation over a trajectory CSV.
    FreeRun {
        #[command(flatten)]
        io: ModelData,
        /// First predicted sample (default: the lag order).
        #[arg(long)]
        start: Option<usize>,
    },
    /// Run the experiment protocol and write the report bundle.
    Protocol,
    /// Run the training-duration sweep.
    Sensitivity {
        /// Comma-separated durations in seconds.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct ModelData {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Simulation(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Simulation(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Simulation(m) | Failure::Other(m) => m,
        }
    }
}

impl From<PlantError> for Failure {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::NonFiniteState | PlantError::GimbalLock { .. } | PlantError::OutOfWindow { .. } => {
                Failure::Simulation(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        match e {
            RunnerError::Plant(p) => p.into(),
            RunnerError::Config(_) | RunnerError::NormalizationMismatch | RunnerError::MissingNormalization => {
                Failure::Config(e.to_string())
            }
            RunnerError::ModelShape { .. } | RunnerError::InvalidStart { .. } => Failure::Config(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<MogpError> for Failure {
    fn from(e: MogpError) -> Self {
        match e {
            MogpError::Json(_) | MogpError::SchemaVersion { .. } => Failure::Config(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<NarxError> for Failure {
    fn from(e: NarxError) -> Self {
        Failure::Config(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Other(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        cfg.threads = Some(n);
    } else if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        cfg.threads = Some(n);
    }
    if cfg.threads == Some(0) {
        return Err(Failure::Config("thread count must be at least 1".into()));
    }
    Ok(cfg)
}

fn require_out<'a>(cli: &'a Cli, what: &str) -> Result<&'a Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Failure::Config(format!("--out <{what}> is required")))
}

fn load_log(path: &Path) -> Result<TrajectoryLog> {
    TrajectoryLog::load_csv(path).map_err(|e| match e {
        PlantError::Csv(m) => Failure::Config(format!("{}: {m}", path.display())),
        other => other.into(),
    })
}

fn print_report(label: &str, report: &MetricsReport) {
    let a = report.aggregate;
    let cov = report.coverage.map_or_else(|| "n/a".to_string(), |c| format!("{c:.4}"));
    println!(
        "{label}: rmse {:.4e}  mae {:.4e}  press {:.4e}  2-sigma coverage {cov}",
        a.rmse, a.mae, a.press
    );
}

fn write_series(out: &Path, series: &Series, norm: &NormalizationMap) -> Result<()> {
    std::fs::write(out, trajectory_csv(series, norm)).map_err(|e| io_err(out, e))
}

fn simulate_plant(cli: &Cli, cfg: &RunConfig, experiment: u32, duration: Option<f64>, dt: Option<f64>) -> Result<()> {
    let out = require_out(cli, "file.csv")?;
    let exp = Experiment::from_number(experiment)?;
    let duration = duration.unwrap_or(cfg.plant.duration);
    let dt = dt.unwrap_or(cfg.plant.sample_dt);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Failure::Config(format!("duration must be positive, got {duration}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Failure::Config(format!("sample-dt must be positive, got {dt}")));
    }
    let plant = cfg.plant.build_plant()?;
    let schedule = InputSchedule::for_experiment(exp, &cfg.excitation, duration);
    let log = run_experiment(&plant, &schedule, &cfg.plant.simulation, duration, dt)?;
    log.save_csv(out).map_err(|e| io_err(out, e))?;
    println!("{}: {} rows", out.display(), log.len());
    for (name, (lo, hi)) in CHANNEL_NAMES.iter().zip(log.channel_ranges()) {
        println!("  {name:<15} [{lo:.6e}, {hi:.6e}]");
    }
    Ok(())
}

fn train(cfg: &RunConfig, data: &Path, model_path: &Path, boundary: Option<f64>, baseline: bool) -> Result<()> {
    let log = load_log(data)?;
    let end = *log.t.last().ok_or_else(|| Failure::Config(format!("{}: empty log", data.display())))?;
    let boundary = boundary.unwrap_or(cfg.narx.boundary);
    let segment = (boundary < end).then_some(boundary);
    let norm = build_normalization(&log, segment)?;
    let ds = embed(&log, cfg.narx.lag, &norm)?;
    let train = match segment {
        Some(b) => split(&ds, b)?.0,
        None => ds,
    };
    let train = subsample(&train, cfg.narx.n_max);
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.training.clone()
    };
    log::info!("training on {} rows", train.len());
    let (x, y) = (train.x.as_ref(), train.y.as_ref());
    let model = if baseline {
        AnyModel::Independent(train_independent_baseline(x, y, Some(norm), &train_cfg)?)
    } else {
        AnyModel::Mogp(train_shared(x, y, Some(norm), &train_cfg)?)
    };
    model.save(model_path)?;
    match &model {
        AnyModel::Mogp(m) => println!(
            "{}: multi-output model, {} rows, negative log likelihood {:.6e} ({:?})",
            model_path.display(),
            train.len(),
            m.meta.negative_log_likelihood,
            m.meta.stop_reason
        ),
        AnyModel::Independent(m) => println!(
            "{}: independent baseline, {} rows, negative log likelihood {:.6e}",
            model_path.display(),
            train.len(),
            m.models.iter().map(|m| m.meta.negative_log_likelihood).sum::<f64>()
        ),
    }
    Ok(())
}

fn load_model(io: &ModelData) -> Result<(AnyModel, TrajectoryLog)> {
    let model = AnyModel::load(&io.model)?;
    let log = load_log(&io.data)?;
    Ok((model, log))
}

fn model_norm(model: &dyn Predictor) -> Result<NormalizationMap> {
    model.normalization().cloned().ok_or_else(|| RunnerError::MissingNormalization.into())
}

fn predict(cli: &Cli, io: &ModelData) -> Result<()> {
    let out = require_out(cli, "file.csv")?;
    let (model, log) = load_model(io)?;
    let model = model.as_predictor();
    let norm = model_norm(model)?;
    let lag = model.dim() / N_CHANNELS;
    let ds = embed(&log, lag, &norm)?;
    let (report, preds) = one_step_validate(model, &ds)?;
    let series = Series {
        t: ds.t.clone(),
        truth: (0..ds.len()).map(|i| ds.target(i)).collect(),
        mean: preds.iter().map(|p| std::array::from_fn(|q| p.mean[q])).collect(),
        std_dev: preds
            .iter()
            .map(|p| std::array::from_fn(|q| observation_std(model, p, q)))
            .collect(),
    };
    write_series(out, &series, &norm)?;
    print_report("one-step", &report);
    Ok(())
}

fn free_run(cli: &Cli, cfg: &RunConfig, io: &ModelData, start: Option<usize>) -> Result<()> {
    let out = require_out(cli, "file.csv")?;
    let (model, log) = load_model(io)?;
    let model = model.as_predictor();
    let norm = model_norm(model)?;
    let start = start.unwrap_or(model.dim() / N_CHANNELS);
    let run = free_run_simulate(model, &log, start, &cfg.protocol.free_run)?;
    let series = Series {
        t: run.t_index.iter().map(|&k| log.t[k]).collect(),
        truth: run.truth.clone(),
        mean: run.mean.clone(),
        std_dev: run.std_dev.clone(),
    };
    write_series(out, &series, &norm)?;
    print_report("free-run", &run.report);
    Ok(())
}

fn protocol(cli: &Cli, cfg: &RunConfig, threads: usize) -> Result<()> {
    let out = require_out(cli, "dir")?;
    let report = run_protocol(cfg)?;
    let files = write_protocol_bundle(&report, out, threads)?;
    for horizon in Horizon::ALL {
        println!("{} averages over {} experiments:", horizon.name(), report.completed().count());
        for metric in Metric::ALL {
            let cells: Vec<String> = ModelId::ALL
                .iter()
                .map(|&m| {
                    let (mean, sd) = report.summary(m, horizon, metric);
                    format!("{} {mean:.4e} (sd {sd:.2e})", m.name())
                })
                .collect();
            println!("  {:<5} {}", metric.name(), cells.join("  "));
        }
    }
    println!(
        "one-step coverage: mogp {:.4}  independent {:.4}",
        report.mean_coverage(ModelId::Mogp, Horizon::OneStep),
        report.mean_coverage(ModelId::Independent, Horizon::OneStep)
    );
    println!("{} files written under {}", files.files.len(), out.display());
    let warnings = report.failures();
    if warnings > 0 {
        eprintln!("warning: {warnings} experiment or free-run failures; the bundle is partial");
    }
    Ok(())
}

fn sensitivity(cli: &Cli, cfg: &mut RunConfig, durations: Option<Vec<f64>>, threads: usize) -> Result<()> {
    let out = require_out(cli, "dir")?;
    if let Some(d) = durations {
        cfg.sensitivity.durations = d;
        cfg.validate()?;
    }
    let result = sensitivity_sweep(cfg)?;
    write_sensitivity_bundle(&result, cfg, out, threads)?;
    for d in result.durations() {
        let cells: Vec<String> = ModelId::ALL
            .iter()
            .map(|&m| {
                let rmse = result.get(d, m).and_then(|r| r.free_run).map(|a| a.rmse);
                format!("{} {}", m.name(), rmse.map_or_else(|| "failed".to_string(), |v| format!("{v:.4e}")))
            })
            .collect();
        println!("{d:>7} s  free-run rmse  {}", cells.join("  "));
    }
    let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} sweep entries failed");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let threads = configure_threads(cfg.threads);
    log::debug!("using {threads} worker threads");
    match &cli.command {
        Command::SimulatePlant {
            experiment,
            duration,
            sample_dt,
        } => simulate_plant(cli, &cfg, *experiment, *duration, *sample_dt),
        Command::Train {
            data,
            model,
            boundary,
            baseline,
        } => train(&cfg, data, model, *boundary, *baseline),
        Command::Predict { io } => predict(cli, io),
        Command::FreeRun { io, start } => free_run(cli, &cfg, io, *start),
        Command::Protocol => protocol(cli, &cfg, threads),
        Command::Sensitivity { durations } => sensitivity(cli, &mut cfg, durations.clone(), threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
