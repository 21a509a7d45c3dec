//! TOML run configuration, flag overrides and resolution into a [`RunConfig`].
//!
//! ```toml
//! seed = 7
//! out = "runs/fig1"
//! workers = 4
//! method = "all"            # uncertain | noisy | unknown | all
//!
//! [model]
//! lambdas = [0.3333333, 0.3333333, 0.3333334]
//! xis = [4.0, 0.5, 0.8]
//!
//! [scheme]
//! n = 500
//! censor_frac = 0.4         # or J = 300 and R = [0, ..., 200]
//!
//! [corruption]
//! rho = 0.1
//! sd = 0.2
//!
//! [fit]
//! tol = 1e-8
//! max_iters = 1000
//! floor = 1e-10
//! init_offset = 0.01
//!
//! [sweep]
//! variable = "rho"          # rho | n
//! grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
//! reps = 20
//! svg = true
//!
//! [data]
//! dataset = "dataset.csv"
//! labels = "soft_labels_uncertain.csv"
//! ```

use std::path::{Path, PathBuf};

use e2m_core::e2m::LabelMode;
use e2m_core::monte_carlo::{CorruptionConfig, SchemeRule};
use e2m_core::{CensoringScheme, E2mConfig, ExperimentConfig, MixtureParams, SweepVariable};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Weights within this distance of summing to one are renormalized, so that
/// configs can write 1/3 as 0.3333333.
pub const LAMBDA_SUM_SLACK: f64 = 1e-6;

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("model", &["lambdas", "xis"]),
    ("scheme", &["n", "J", "R", "censor_frac"]),
    ("corruption", &["rho", "sd"]),
    ("fit", &["tol", "max_iters", "floor", "init_offset"]),
    ("sweep", &["variable", "grid", "reps", "svg"]),
    ("data", &["dataset", "labels"]),
];
const TOP_LEVEL_KEYS: &[&str] = &["seed", "out", "workers", "method"];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub method: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub corruption: CorruptionSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub data: DataSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambdas: Option<Vec<f64>>,
    pub xis: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub n: Option<usize>,
    #[serde(rename = "J")]
    pub failures: Option<usize>,
    #[serde(rename = "R")]
    pub removals: Option<Vec<usize>>,
    pub censor_frac: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    pub rho: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub floor: Option<f64>,
    pub init_offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub svg: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dataset: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Every dotted key in `table` that the config format does not define.
pub fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut unknown = Vec::new();
    for (key, value) in table {
        if TOP_LEVEL_KEYS.contains(&key.as_str()) {
            continue;
        }
        match KNOWN_KEYS.iter().find(|(section, _)| section == key) {
            None => unknown.push(key.clone()),
            Some((section, fields)) => {
                if let toml::Value::Table(inner) = value {
                    unknown.extend(
                        inner
                            .keys()
                            .filter(|k| !fields.contains(&k.as_str()))
                            .map(|k| format!("{section}.{k}")),
                    );
                }
            }
        }
    }
    unknown
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(CliError::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )));
        }
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Values given on the command line; each overrides the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub censor_frac: Option<f64>,
    pub rho: Option<f64>,
    pub reps: Option<usize>,
    pub method: Option<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub variable: Option<String>,
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Generate,
    Fit,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub reps: usize,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataPaths {
    pub dataset: PathBuf,
    pub labels: PathBuf,
}

/// A fully resolved run; this is what the manifest records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means one per processor.
    pub workers: usize,
    pub methods: Vec<LabelMode>,
    /// Absent only for `fit` without a `[model]` section.
    pub model: Option<MixtureParams>,
    pub n: usize,
    pub scheme: SchemeRule,
    pub corruption: CorruptionConfig,
    pub fit: E2mConfig,
    pub init_offset: f64,
    pub sweep: Option<SweepSettings>,
    pub data: Option<DataPaths>,
}

fn bad(field: &str, constraint: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {constraint}"))
}

fn parse_methods(value: &str, command: Command) -> Result<Vec<LabelMode>, CliError> {
    if value == "all" {
        if command == Command::Fit {
            return Err(bad("method", "fit takes one label file; choose uncertain, noisy or unknown"));
        }
        return Ok(LabelMode::ALL.to_vec());
    }
    value
        .parse::<LabelMode>()
        .map(|m| vec![m])
        .map_err(|e| bad("method", e))
}

fn parse_variable(value: &str) -> Result<SweepVariable, CliError> {
    match value {
        "rho" => Ok(SweepVariable::Rho),
        "n" => Ok(SweepVariable::SampleSize),
        other => Err(bad("sweep.variable", format!("expected rho or n, got {other:?}"))),
    }
}

fn resolve_model(m: &ModelSection) -> Result<Option<MixtureParams>, CliError> {
    let (lambdas, xis) = match (&m.lambdas, &m.xis) {
        (None, None) => return Ok(None),
        (Some(l), Some(x)) => (l.clone(), x.clone()),
        _ => return Err(bad("model", "give both lambdas and xis")),
    };
    if lambdas.len() != xis.len() {
        return Err(bad(
            "model",
            format!("{} lambdas but {} xis", lambdas.len(), xis.len()),
        ));
    }
    let total: f64 = lambdas.iter().sum();
    if !((total - 1.0).abs() <= LAMBDA_SUM_SLACK) {
        return Err(bad("model.lambdas", format!("must sum to 1, got {total}")));
    }
    let lambdas = lambdas.iter().map(|l| l / total).collect();
    MixtureParams::new(lambdas, xis)
        .map(Some)
        .map_err(|e| bad("model", e))
}

fn resolve_scheme(
    s: &SchemeSection,
    o: &Overrides,
) -> Result<(usize, SchemeRule), CliError> {
    let explicit = s.failures.is_some() || s.removals.is_some();
    if explicit && s.censor_frac.is_some() {
        return Err(bad("scheme", "give either censor_frac or J/R, not both"));
    }
    if explicit && o.censor_frac.is_none() {
        let failures = match (s.failures, &s.removals) {
            (Some(j), _) => j,
            (None, Some(r)) => r.len(),
            (None, None) => unreachable!(),
        };
        let n = o
            .n
            .or(s.n)
            .unwrap_or_else(|| failures + s.removals.iter().flatten().sum::<usize>());
        let scheme = match &s.removals {
            Some(r) => CensoringScheme::new(n, failures, r.clone()),
            None => CensoringScheme::conventional(n, failures),
        }
        .map_err(|e| bad("scheme", e))?;
        return Ok((n, SchemeRule::Explicit(scheme)));
    }
    let n = o.n.or(s.n).unwrap_or(ExperimentConfig::reference().n);
    let frac = o.censor_frac.or(s.censor_frac).unwrap_or(0.4);
    let rule = SchemeRule::CensorFraction(frac);
    rule.scheme_for(n).map_err(|e| bad("scheme", e))?;
    Ok((n, rule))
}

impl RunConfig {
    pub fn resolve(command: Command, file: FileConfig, o: &Overrides) -> Result<Self, CliError> {
        let methods = parse_methods(
            o.method.as_deref().or(file.method.as_deref()).unwrap_or(match command {
                Command::Fit => "uncertain",
                _ => "all",
            }),
            command,
        )?;

        let model = match resolve_model(&file.model)? {
            Some(m) => Some(m),
            None if command == Command::Fit => None,
            None => Some(ExperimentConfig::reference().truth),
        };

        let (n, scheme) = resolve_scheme(&file.scheme, o)?;

        let defaults = CorruptionConfig::default();
        let corruption = CorruptionConfig {
            rho: o.rho.or(file.corruption.rho).unwrap_or(defaults.rho),
            sd: file.corruption.sd.unwrap_or(defaults.sd),
        };
        if !(0.0..=1.0).contains(&corruption.rho) {
            return Err(bad("corruption.rho", format!("must lie in [0, 1], got {}", corruption.rho)));
        }
        if !(corruption.sd >= 0.0 && corruption.sd.is_finite()) {
            return Err(bad("corruption.sd", format!("must be nonnegative, got {}", corruption.sd)));
        }

        let d = E2mConfig::default();
        let fit = E2mConfig {
            tol: o.tol.or(file.fit.tol).unwrap_or(d.tol),
            max_iters: o.max_iters.or(file.fit.max_iters).unwrap_or(d.max_iters),
            floor: file.fit.floor.unwrap_or(d.floor),
        };
        fit.validate().map_err(|e| bad("fit", e))?;
        let init_offset = file
            .fit
            .init_offset
            .unwrap_or(ExperimentConfig::reference().init_offset);
        if let Some(m) = &model {
            if m.xis().iter().any(|x| !(x - init_offset > 0.0)) {
                return Err(bad(
                    "fit.init_offset",
                    format!("every xi minus {init_offset} must stay positive"),
                ));
            }
        }

        let sweep = if command == Command::Sweep {
            let variable =
                parse_variable(o.variable.as_deref().or(file.sweep.variable.as_deref()).unwrap_or("rho"))?;
            let grid = file.sweep.grid.clone().unwrap_or_else(|| variable.default_grid());
            let reps = o.reps.or(file.sweep.reps).unwrap_or(20);
            if grid.is_empty() {
                return Err(bad("sweep.grid", "must not be empty"));
            }
            if reps == 0 {
                return Err(bad("sweep.reps", "must be at least 1"));
            }
            Some(SweepSettings {
                variable,
                grid,
                reps,
                svg: o.svg || file.sweep.svg.unwrap_or(false),
            })
        } else {
            None
        };

        let data = if command == Command::Fit {
            let dataset = o
                .dataset
                .clone()
                .or(file.data.dataset)
                .ok_or_else(|| bad("data.dataset", "fit needs a dataset file"))?;
            let labels = o
                .labels
                .clone()
                .or(file.data.labels)
                .ok_or_else(|| bad("data.labels", "fit needs a soft-label file"))?;
            for (field, path) in [("data.dataset", &dataset), ("data.labels", &labels)] {
                if !path.is_file() {
                    return Err(bad(field, format!("{} does not exist", path.display())));
                }
            }
            Some(DataPaths { dataset, labels })
        } else {
            None
        };

        Ok(Self {
            command,
            seed: o.seed.or(file.seed).unwrap_or(0),
            out: o.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            workers: o.workers.or(file.workers).unwrap_or(0),
            methods,
            model,
            n,
            scheme,
            corruption,
            fit,
            init_offset,
            sweep,
            data,
        })
    }

    /// The simulation settings for `generate` and `sweep`.
    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let truth = self
            .model
            .clone()
            .ok_or_else(|| bad("model", "simulation needs lambdas and xis"))?;
        Ok(ExperimentConfig {
            truth,
            n: self.n,
            scheme: self.scheme.clone(),
            corruption: self.corruption,
            init_offset: self.init_offset,
            fit: self.fit,
        })
    }
}
