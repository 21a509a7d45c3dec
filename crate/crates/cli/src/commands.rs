use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use e2m_core::e2m::{fit, offset_init, quantile_spread_init, E2mError, LabelMode};
use e2m_core::io::{
    align_soft_labels, read_dataset, read_soft_labels, write_dataset, write_figure,
    write_fit_result, write_results, write_soft_labels, write_summary, write_trace,
};
use e2m_core::monte_carlo::{replication_rng, run_sweep, simulate, SimulationError, SweepSpec};
use e2m_core::{RabiasReport, SoftLabeledDataset};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::svg::{band_chart, Series};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_with<F, E>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
    E: std::fmt::Display,
{
    let mut w = create(path)?;
    body(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: Command,
    seed: u64,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
    outputs: Vec<String>,
}

fn write_manifest(
    cfg: &RunConfig,
    details: serde_json::Value,
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "e2m",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command,
        seed: cfg.seed,
        config: cfg,
        details,
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = cfg.out.join("manifest.json");
    write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w).map_err(serde_json::Error::io)
    })
}

fn simulation_error(e: SimulationError) -> CliError {
    match e {
        SimulationError::Estimation(inner) => estimation_error(inner),
        other => CliError::Config(other.to_string()),
    }
}

fn estimation_error(e: E2mError) -> CliError {
    match e {
        E2mError::DegenerateLikelihood { .. }
        | E2mError::TotalConflict { .. }
        | E2mError::ComponentStarved { .. }
        | E2mError::NonFinite { .. } => CliError::Degenerate(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Simulates one sample: `dataset.csv`, `corruption.csv` and one
/// `soft_labels_<method>.csv` per requested method.
pub fn generate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let exp = cfg.experiment()?;
    prepare_out(&cfg.out)?;
    let mut rng = replication_rng(cfg.seed, 0, 0);
    let sample = simulate(&exp, &mut rng).map_err(simulation_error)?;
    let mut outputs = Vec::new();

    let path = cfg.out.join("dataset.csv");
    write_with(&path, |w| write_dataset(&sample.data, w))?;
    outputs.push(path);

    let ids: Vec<usize> = sample.data.records().iter().map(|r| r.item_id).collect();
    let path = cfg.out.join("corruption.csv");
    write_with(&path, |w| -> Result<(), std::io::Error> {
        writeln!(w, "item_id,error_prob,noisy_label")?;
        for ((id, q), z) in ids
            .iter()
            .zip(&sample.corruption.error_probs)
            .zip(&sample.corruption.noisy_labels)
        {
            writeln!(w, "{id},{q},{}", z + 1)?;
        }
        Ok(())
    })?;
    outputs.push(path);

    for &method in &cfg.methods {
        let labeled = sample.soft_labeled(method).map_err(simulation_error)?;
        let path = cfg.out.join(format!("soft_labels_{method}.csv"));
        write_with(&path, |w| write_soft_labels(&ids, labeled.labels(), w))?;
        outputs.push(path);
    }

    let details = json!({ "effective_sd": cfg.corruption.effective_sd() });
    write_manifest(cfg, details, &outputs)?;
    Ok(outputs)
}

fn read_input(cfg: &RunConfig) -> Result<SoftLabeledDataset, CliError> {
    let paths = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("fit needs data.dataset and data.labels".into()))?;
    let open = |p: &Path| File::open(p).map_err(|e| CliError::io(p, e));
    let data = read_dataset(open(&paths.dataset)?).map_err(|e| CliError::io(&paths.dataset, e))?;
    let labels =
        read_soft_labels(open(&paths.labels)?).map_err(|e| CliError::io(&paths.labels, e))?;
    let labels = align_soft_labels(&data, labels).map_err(|e| CliError::io(&paths.labels, e))?;
    SoftLabeledDataset::new(data, labels).map_err(|e| CliError::Config(e.to_string()))
}

/// Fits one dataset: `fit_result.csv` and `trace.csv`. A run that stops at
/// `max_iters` still writes both files before reporting non-convergence.
pub fn fit_dataset(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ds = read_input(cfg)?;
    prepare_out(&cfg.out)?;
    let p = ds.components();
    let init = match &cfg.model {
        Some(m) if m.len() != p => {
            return Err(CliError::Config(format!(
                "model: {} components but the label file has {p}",
                m.len()
            )))
        }
        Some(m) => offset_init(m, cfg.init_offset),
        None => quantile_spread_init(ds.data(), p),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    let method: LabelMode = cfg.methods[0];

    let trace_path = cfg.out.join("trace.csv");
    let result_path = cfg.out.join("fit_result.csv");
    let outcome = fit(&ds, &init, &cfg.fit);
    let trace = match &outcome {
        Ok((_, t)) => t,
        Err(e) => &e.trace,
    };
    write_with(&trace_path, |w| write_trace(trace, w))?;
    let mut outputs = vec![trace_path];

    match outcome {
        Ok((params, trace)) => {
            write_with(&result_path, |w| {
                write_fit_result(method.as_str(), 0, &params, &trace, w)
            })?;
            outputs.push(result_path);
            let details = json!({
                "init": { "lambdas": init.lambdas(), "xis": init.xis() },
                "converged": trace.converged,
                "iterations": trace.iterations_used,
            });
            write_manifest(cfg, details, &outputs)?;
            if !trace.converged {
                return Err(CliError::NotConverged(format!(
                    "stopped after {} iterations without meeting tol {}",
                    trace.iterations_used, cfg.fit.tol
                )));
            }
            Ok(outputs)
        }
        Err(e) => {
            let details = json!({ "error": e.to_string() });
            write_manifest(cfg, details, &outputs)?;
            Err(estimation_error(e.error))
        }
    }
}

fn figure_series(report: &RabiasReport, parameter: &str, methods: &[LabelMode]) -> Vec<Series> {
    methods
        .iter()
        .map(|&m| Series {
            name: m.to_string(),
            points: report
                .cells
                .iter()
                .filter(|c| c.method == m && c.parameter == parameter)
                .map(|c| (c.value, c.mean, c.sd))
                .collect(),
        })
        .collect()
}

/// Runs a bias sweep: `results.csv`, `summary.csv`, one `figure_xi_k.csv` per
/// component and, if asked, matching SVG charts.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let settings = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing sweep settings".into()))?;
    let spec = SweepSpec {
        variable: settings.variable,
        grid: settings.grid.clone(),
        reps: settings.reps,
        methods: cfg.methods.clone(),
        base: cfg.experiment()?,
    };
    spec.validate().map_err(simulation_error)?;
    prepare_out(&cfg.out)?;
    let outcome = run_sweep(&spec, cfg.seed, cfg.workers).map_err(simulation_error)?;
    let p = spec.base.truth.len();
    let variable = spec.variable.as_str();
    let mut outputs = Vec::new();

    let path = cfg.out.join("results.csv");
    write_with(&path, |w| write_results(variable, p, &outcome.rows, w))?;
    outputs.push(path);
    let path = cfg.out.join("summary.csv");
    write_with(&path, |w| write_summary(&outcome.report, w))?;
    outputs.push(path);

    for k in 1..=p {
        let parameter = format!("xi_{k}");
        let path = cfg.out.join(format!("figure_{parameter}.csv"));
        write_with(&path, |w| {
            write_figure(&outcome.report, &parameter, &spec.methods, w)
        })?;
        outputs.push(path);
        if settings.svg {
            let x_label = match spec.variable {
                e2m_core::SweepVariable::Rho => "mean error probability rho",
                e2m_core::SweepVariable::SampleSize => "sample size n",
            };
            let chart = band_chart(
                &format!("Estimation of {parameter}"),
                x_label,
                "RABias",
                &figure_series(&outcome.report, &parameter, &spec.methods),
            );
            let path = cfg.out.join(format!("figure_{parameter}.svg"));
            write_with(&path, |w| w.write_all(chart.as_bytes()))?;
            outputs.push(path);
        }
    }

    let failures = outcome
        .rows
        .iter()
        .filter(|r| r.result.outcome.is_err())
        .count();
    let effective_sd: Vec<_> = outcome
        .effective_sd
        .iter()
        .map(|(v, sd)| json!({ "value": v, "sd": sd }))
        .collect();
    let details = json!({
        "effective_sd": effective_sd,
        "replications": outcome.rows.len(),
        "failed_replications": failures,
    });
    write_manifest(cfg, details, &outputs)?;
    Ok(outputs)
}

pub fn execute(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    match cfg.command {
        Command::Generate => generate(cfg),
        Command::Fit => fit_dataset(cfg),
        Command::Sweep => sweep(cfg),
    }
}
