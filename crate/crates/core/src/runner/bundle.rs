use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::metrics::{Horizon, Metric, ModelId};
use super::plot::{panel_svg, PanelData};
use super::protocol::{ProtocolReport, SensitivityResult, Series};
use super::RunnerError;
use crate::narx::{NormalizationMap, N_OUTPUTS};
use crate::plant::OUTPUT_NAMES;

/// Relative paths written by a bundle writer, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleFiles {
    pub root: PathBuf,
    pub files: Vec<String>,
}

impl BundleFiles {
    fn write(&mut self, rel: &str, contents: &str) -> Result<(), RunnerError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| RunnerError::Io(format!("{}: {e}", dir.display())))?;
        }
        fs::write(&path, contents).map_err(|e| RunnerError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(rel.to_string());
        Ok(())
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |v| format!("{v:.9e}"))
}

/// Raw-unit trajectory table with the two-sigma band.
pub fn trajectory_csv(series: &Series, norm: &NormalizationMap) -> String {
    let mut out = String::from("t");
    for name in OUTPUT_NAMES {
        let _ = write!(out, ",{name}_true,{name}_pred,{name}_lower,{name}_upper");
    }
    out.push('\n');
    for i in 0..series.t.len() {
        let _ = write!(out, "{}", series.t[i]);
        for q in 0..N_OUTPUTS {
            let s = norm.channels[q];
            let m = s.denormalize(series.mean[i][q]);
            let band = 2.0 * series.std_dev[i][q] * s.half_range;
            let _ = write!(out, ",{:.9e},{:.9e},{:.9e},{:.9e}", s.denormalize(series.truth[i][q]), m, m - band, m + band);
        }
        out.push('\n');
    }
    out
}

fn trajectory_svg(title: &str, series: &Series, norm: &NormalizationMap) -> String {
    let panels: Vec<PanelData<'_>> = (0..N_OUTPUTS)
        .map(|q| {
            let s = norm.channels[q];
            let mean: Vec<f64> = series.mean.iter().map(|m| s.denormalize(m[q])).collect();
            let band: Vec<f64> = series.std_dev.iter().map(|d| 2.0 * d[q] * s.half_range).collect();
            PanelData {
                title: OUTPUT_NAMES[q],
                truth: series.truth.iter().map(|v| s.denormalize(v[q])).collect(),
                lower: mean.iter().zip(&band).map(|(m, b)| m - b).collect(),
                upper: mean.iter().zip(&band).map(|(m, b)| m + b).collect(),
                mean,
            }
        })
        .collect();
    panel_svg(title, &series.t, &panels)
}

/// Write the protocol bundle under `dir`: one CSV per horizon and metric,
/// coverage and per-channel tables, trajectories, plots and `manifest.json`.
/// Everything except the optional `timings.json` is a pure function of the
/// configuration.
pub fn write_protocol_bundle(report: &ProtocolReport, dir: &Path, threads: usize) -> Result<BundleFiles, RunnerError> {
    let cfg = &report.config;
    let mut bundle = BundleFiles {
        root: dir.to_path_buf(),
        files: Vec::new(),
    };
    for horizon in Horizon::ALL {
        for metric in Metric::ALL {
            let mut csv = String::from("experiment,name");
            for m in ModelId::ALL {
                let _ = write!(csv, ",{}", m.name());
            }
            csv.push('\n');
            for row in report.table(horizon, metric) {
                let _ = writeln!(csv, "{},{},{},{}", row.label, row.name, cell(row.values[0]), cell(row.values[1]));
            }
            bundle.write(&format!("metrics/{}_{}.csv", horizon.name(), metric.name()), &csv)?;
        }
    }

    let mut coverage = String::from("experiment,model,one_step,free_run\n");
    let mut channels = String::from("experiment,model,horizon");
    for name in OUTPUT_NAMES {
        let _ = write!(channels, ",{name}");
    }
    channels.push('\n');
    for (exp, run) in report.completed() {
        for m in &run.runs {
            let cov = |h| m.report(h).and_then(|r| r.coverage);
            let _ = writeln!(
                coverage,
                "{},{},{},{}",
                exp.number(),
                m.model.name(),
                cell(cov(Horizon::OneStep)),
                cell(cov(Horizon::FreeRun))
            );
            for h in Horizon::ALL {
                let _ = write!(channels, "{},{},{}", exp.number(), m.model.name(), h.name());
                for q in 0..N_OUTPUTS {
                    let _ = write!(channels, ",{}", cell(m.report(h).map(|r| r.channels[q].rmse)));
                }
                channels.push('\n');
            }
        }
    }
    bundle.write("metrics/coverage.csv", &coverage)?;
    bundle.write("metrics/channel_rmse.csv", &channels)?;

    for (exp, run) in report.completed() {
        let norm = &run.data.norm;
        for m in &run.runs {
            let mut series = vec![(Horizon::OneStep, &m.one_step_series)];
            if let Ok((_, s)) = &m.free_run {
                series.push((Horizon::FreeRun, s));
            }
            for (h, s) in series {
                let stem = format!("exp{}_{}_{}", exp.number(), m.model.name(), h.name());
                if cfg.protocol.trajectories {
                    bundle.write(&format!("trajectories/{stem}.csv"), &trajectory_csv(s, norm))?;
                }
                if cfg.protocol.plots {
                    let title = format!("Experiment {} ({exp}), {}, {}", exp.number(), m.model.name(), h.name());
                    bundle.write(&format!("plots/{stem}.svg"), &trajectory_svg(&title, s, norm))?;
                }
            }
        }
    }

    let experiments: Vec<_> = report
        .experiments
        .iter()
        .map(|r| match &r.outcome {
            Ok(run) => json!({
                "number": r.experiment.number(),
                "name": r.experiment.to_string(),
                "status": "completed",
                "train_rows": run.data.train.len(),
                "train_rows_available": run.data.train_rows_available,
                "validation_rows": run.data.validation.len(),
                "normalization": run.data.norm,
                "models": run.runs.iter().map(|m| json!({
                    "model": m.model,
                    "training": m.training,
                    "one_step": m.one_step,
                    "free_run": m.free_run.as_ref().map(|(r, _)| r).ok(),
                    "free_run_error": m.free_run.as_ref().err(),
                })).collect::<Vec<_>>(),
            }),
            Err(e) => json!({
                "number": r.experiment.number(),
                "name": r.experiment.to_string(),
                "status": "failed",
                "error": e,
            }),
        })
        .collect();
    let mut files = bundle.files.clone();
    files.push("manifest.json".into());
    let manifest = json!({
        "kind": "protocol",
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "threads": threads,
        "complete": report.failures() == 0,
        "warnings": report.failures(),
        "config": cfg,
        "experiments": experiments,
        "files": files,
    });
    bundle.write("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;

    if cfg.protocol.write_timings {
        let timings = json!({
            "total_s": report.wall_time_s,
            "experiments": report.experiments.iter().map(|r| json!({
                "number": r.experiment.number(),
                "total_s": r.wall_time_s,
                "training_s": r.outcome.as_ref().ok().map(|run| run.runs.iter().map(|m| json!({
                    "model": m.model,
                    "seconds": m.training.wall_time_s,
                })).collect::<Vec<_>>()),
            })).collect::<Vec<_>>(),
        });
        bundle.write("timings.json", &(serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n"))?;
    }
    Ok(bundle)
}

/// Write `sensitivity.csv` and `manifest.json` under `dir`.
pub fn write_sensitivity_bundle(
    result: &SensitivityResult,
    cfg: &super::RunConfig,
    dir: &Path,
    threads: usize,
) -> Result<BundleFiles, RunnerError> {
    let mut bundle = BundleFiles {
        root: dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut csv = String::from("duration,model,train_rows,free_run_rmse,free_run_mae,free_run_press,one_step_rmse,status\n");
    for r in &result.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.duration,
            r.model.name(),
            r.train_rows,
            cell(r.free_run.map(|a| a.rmse)),
            cell(r.free_run.map(|a| a.mae)),
            cell(r.free_run.map(|a| a.press)),
            cell(r.one_step.map(|a| a.rmse)),
            if r.error.is_some() { "failed" } else { "ok" }
        );
    }
    bundle.write("sensitivity.csv", &csv)?;
    let manifest = json!({
        "kind": "sensitivity",
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "threads": threads,
        "config": cfg,
        "rows": result.rows,
        "files": ["sensitivity.csv", "manifest.json"],
    });
    bundle.write("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    if cfg.protocol.write_timings {
        bundle.write("timings.json", &(serde_json::to_string_pretty(&json!({"total_s": result.wall_time_s})).expect("timings serialize") + "\n"))?;
    }
    Ok(bundle)
}
