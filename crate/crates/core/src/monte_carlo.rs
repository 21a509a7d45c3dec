//! Bias studies: simulate labeled mixtures, censor them, corrupt the labels,
//! fit under each labeling regime and aggregate absolute relative bias.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! (master seed, grid index, replication). The stream does not depend on the
//! method, so all methods at a grid point see the same samples, and results
//! do not depend on how replications are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::censoring::{run_life_test, CensoredDataset, CensoringError, CensoringScheme};
use crate::e2m::{
    error_contour, fit, make_soft_labels, offset_init, E2mConfig, E2mError, LabelCorruption,
    LabelMode, SoftLabeledDataset,
};
use crate::lifetime::MixtureParams;

/// Cap on the Beta standard deviation relative to √(ρ(1−ρ)).
pub const BETA_SD_CAP: f64 = 0.95;

/// A grid point is unreliable when more than this share of its replications fail.
pub const UNRELIABLE_FAILURE_SHARE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("truth must be nonzero for relative bias")]
    ZeroTruth,
    #[error("error probability mean must lie in [0, 1], got {0}")]
    InvalidRho(f64),
    #[error("error probability sd must be nonnegative, got {0}")]
    InvalidSd(f64),
    #[error("{labels} labels but {probs} error probabilities")]
    LengthMismatch { labels: usize, probs: usize },
    #[error("label {label} outside {components} components")]
    LabelOutOfRange { label: usize, components: usize },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Censoring(#[from] CensoringError),
    #[error(transparent)]
    Estimation(#[from] E2mError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Error probabilities q_j ~ Beta with mean `rho` and standard deviation `sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    pub rho: f64,
    pub sd: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self { rho: 0.1, sd: 0.2 }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(SimulationError::InvalidRho(self.rho));
        }
        if !(self.sd >= 0.0) || !self.sd.is_finite() {
            return Err(SimulationError::InvalidSd(self.sd));
        }
        Ok(())
    }

    /// min(sd, 0.95·√(ρ(1−ρ))): a Beta with mean ρ needs sd² < ρ(1−ρ).
    pub fn effective_sd(&self) -> f64 {
        self.sd.min(BETA_SD_CAP * (self.rho * (1.0 - self.rho)).sqrt())
    }

    /// Moment-matched (α, β), or `None` when the distribution is a point mass at ρ.
    pub fn beta_shape(&self) -> Option<(f64, f64)> {
        let sd = self.effective_sd();
        if sd <= 0.0 {
            return None;
        }
        let concentration = self.rho * (1.0 - self.rho) / (sd * sd) - 1.0;
        Some((self.rho * concentration, (1.0 - self.rho) * concentration))
    }
}

/// Draws n error probabilities q_j.
pub fn draw_error_probs<R: Rng + ?Sized>(
    cfg: &CorruptionConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SimulationError> {
    cfg.validate()?;
    match cfg.beta_shape() {
        None => Ok(vec![cfg.rho; n]),
        Some((a, b)) => {
            let beta = Beta::new(a, b).map_err(|_| SimulationError::InvalidSd(cfg.sd))?;
            Ok((0..n)
                .map(|_| beta.sample(rng).clamp(0.0, 1.0))
                .collect())
        }
    }
}

/// With probability q_j the label is redrawn uniformly over all `p` classes
/// (possibly landing on the true one); plausibilities follow from q_j and the
/// resulting hard label.
pub fn corrupt_labels<R: Rng + ?Sized>(
    true_labels: &[usize],
    error_probs: &[f64],
    p: usize,
    rng: &mut R,
) -> Result<LabelCorruption, SimulationError> {
    if true_labels.len() != error_probs.len() {
        return Err(SimulationError::LengthMismatch {
            labels: true_labels.len(),
            probs: error_probs.len(),
        });
    }
    let mut noisy_labels = Vec::with_capacity(true_labels.len());
    let mut plausibilities = Vec::with_capacity(true_labels.len());
    for (&z, &q) in true_labels.iter().zip(error_probs) {
        if z >= p {
            return Err(SimulationError::LabelOutOfRange {
                label: z,
                components: p,
            });
        }
        let u: f64 = rng.random();
        let noisy = if u < q { rng.random_range(0..p) } else { z };
        noisy_labels.push(noisy);
        plausibilities.push(error_contour(q, noisy, p).map_err(E2mError::from)?);
    }
    Ok(LabelCorruption {
        error_probs: error_probs.to_vec(),
        noisy_labels,
        plausibilities,
    })
}

/// |(estimate − truth) / truth|.
pub fn rabias(estimate: f64, truth: f64) -> Result<f64, SimulationError> {
    if truth == 0.0 {
        return Err(SimulationError::ZeroTruth);
    }
    Ok(((estimate - truth) / truth).abs())
}

/// The permutation `order` (estimate component `order[z]` ↔ true component z)
/// minimizing Σ_z RABias(ξ̂_{order[z]}, ξ_z), found exhaustively.
pub fn align_to_truth(estimate: &MixtureParams, truth: &MixtureParams) -> Vec<usize> {
    let est = estimate.xis();
    let tru = truth.xis();
    let mut best: (f64, Vec<usize>) = (f64::INFINITY, (0..est.len()).collect());
    let mut current: Vec<usize> = (0..est.len()).collect();
    permute(&mut current, 0, &mut |order| {
        let cost: f64 = order
            .iter()
            .enumerate()
            .map(|(z, &k)| ((est[k] - tru[z]) / tru[z]).abs())
            .sum();
        if cost < best.0 {
            best = (cost, order.to_vec());
        }
    });
    best.1
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// How the censoring plan is derived for a given sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeRule {
    /// R = (0, …, 0, n − m), m = ⌈n(1 − f)⌉.
    CensorFraction(f64),
    /// A fixed plan; its n overrides the experiment's.
    Explicit(CensoringScheme),
}

impl SchemeRule {
    pub fn scheme_for(&self, n: usize) -> Result<CensoringScheme, CensoringError> {
        match self {
            SchemeRule::CensorFraction(f) => CensoringScheme::from_censor_fraction(n, *f),
            SchemeRule::Explicit(s) => Ok(s.clone()),
        }
    }
}

/// One simulated experiment: model, plan, corruption and estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truth: MixtureParams,
    pub n: usize,
    pub scheme: SchemeRule,
    pub corruption: CorruptionConfig,
    /// ξ⁰ = ξ − init_offset, λ⁰ = λ.
    pub init_offset: f64,
    pub fit: E2mConfig,
}

impl ExperimentConfig {
    /// λ = (1/3, 1/3, 1/3), ξ = (4, 0.5, 0.8), n = 500 with 60% of units
    /// observed, ρ = 0.1 with sd 0.2, starting at ξ − 0.01.
    pub fn reference() -> Self {
        let third = 1.0 / 3.0;
        Self {
            truth: MixtureParams::new(vec![third; 3], vec![4.0, 0.5, 0.8])
                .expect("reference parameters are valid"),
            n: 500,
            scheme: SchemeRule::CensorFraction(0.4),
            corruption: CorruptionConfig::default(),
            init_offset: 0.01,
            fit: E2mConfig::default(),
        }
    }

    pub fn scheme(&self) -> Result<CensoringScheme, CensoringError> {
        self.scheme.scheme_for(self.n)
    }
}

/// A censored sample with true labels and their corrupted versions.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub data: CensoredDataset,
    pub corruption: LabelCorruption,
}

impl SimulatedSample {
    pub fn soft_labeled(&self, mode: LabelMode) -> Result<SoftLabeledDataset, SimulationError> {
        let p = self
            .corruption
            .plausibilities
            .first()
            .map_or(1, |c| c.frame().size());
        let labels =
            make_soft_labels(mode, self.data.len(), p, Some(&self.corruption)).map_err(E2mError::from)?;
        Ok(SoftLabeledDataset::new(self.data.clone(), labels)?)
    }
}

/// sample → censor → draw q → corrupt labels, all from `rng`.
pub fn simulate<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<SimulatedSample, SimulationError> {
    let scheme = cfg.scheme()?;
    let units = cfg.truth.sample_labeled(scheme.n(), rng);
    let data = run_life_test(&units, &scheme, rng)?;
    let q = draw_error_probs(&cfg.corruption, data.len(), rng)?;
    let true_labels: Vec<usize> = data
        .records()
        .iter()
        .map(|r| r.true_label.expect("simulated records carry labels"))
        .collect();
    let corruption = corrupt_labels(&true_labels, &q, cfg.truth.len(), rng)?;
    Ok(SimulatedSample { data, corruption })
}

/// Estimates of a successful replication, components aligned to truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub params: MixtureParams,
    pub iterations: usize,
    pub converged: bool,
    pub gll: f64,
    pub rabias_lambda: Vec<f64>,
    pub rabias_xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    /// Short machine-readable cause, e.g. `component_starved`.
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub method: LabelMode,
    pub rep: usize,
    pub outcome: Result<FitSummary, ReplicationFailure>,
}

fn failure_kind(e: &SimulationError) -> &'static str {
    match e {
        SimulationError::Estimation(E2mError::ComponentStarved { .. }) => "component_starved",
        SimulationError::Estimation(E2mError::TotalConflict { .. }) => "total_conflict",
        SimulationError::Estimation(E2mError::DegenerateLikelihood { .. }) => "degenerate_likelihood",
        SimulationError::Estimation(E2mError::NonFinite { .. }) => "non_finite",
        _ => "simulation_error",
    }
}

/// Simulates one sample from `rng` and fits it with `method`, starting at the
/// offset truth. Estimation failures are captured in the result.
pub fn run_replication<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    method: LabelMode,
    rep: usize,
    rng: &mut R,
) -> ReplicationResult {
    let outcome = replicate(cfg, method, rng).map_err(|e| ReplicationFailure {
        kind: failure_kind(&e),
        message: e.to_string(),
    });
    ReplicationResult {
        method,
        rep,
        outcome,
    }
}

fn replicate<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    method: LabelMode,
    rng: &mut R,
) -> Result<FitSummary, SimulationError> {
    let sample = simulate(cfg, rng)?;
    let ds = sample.soft_labeled(method)?;
    let init = offset_init(&cfg.truth, cfg.init_offset)?;
    let (estimate, trace) = fit(&ds, &init, &cfg.fit).map_err(|e| e.error)?;
    let order = align_to_truth(&estimate, &cfg.truth);
    let params = estimate.permuted(&order);
    let rabias_lambda = params
        .lambdas()
        .iter()
        .zip(cfg.truth.lambdas())
        .map(|(&e, &t)| rabias(e, t))
        .collect::<Result<_, _>>()?;
    let rabias_xi = params
        .xis()
        .iter()
        .zip(cfg.truth.xis())
        .map(|(&e, t)| rabias(e, t))
        .collect::<Result<_, _>>()?;
    Ok(FitSummary {
        params,
        iterations: trace.iterations_used,
        converged: trace.converged,
        gll: trace.final_gll().unwrap_or(f64::NAN),
        rabias_lambda,
        rabias_xi,
    })
}

/// The stream for replication `rep` at grid point `grid_index`.
pub fn replication_rng(master_seed: u64, grid_index: usize, rep: usize) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(grid_index as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&(rep as u64).to_le_bytes());
    seed[24..].copy_from_slice(b"e2m-sim\0");
    ChaCha8Rng::from_seed(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Mean error probability ρ.
    Rho,
    /// Number of units n.
    SampleSize,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::Rho => "rho",
            SweepVariable::SampleSize => "n",
        }
    }

    /// {0, 0.1, …, 0.5} for ρ; {100, 200, 300, 400, 500, 800} for n.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepVariable::Rho => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            SweepVariable::SampleSize => vec![100.0, 200.0, 300.0, 400.0, 500.0, 800.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub reps: usize,
    pub methods: Vec<LabelMode>,
    pub base: ExperimentConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidSweep(m));
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        for (i, _) in self.grid.iter().enumerate() {
            let cfg = self.config_at(i)?;
            cfg.corruption.validate()?;
            cfg.scheme()?;
        }
        Ok(())
    }

    /// The experiment at grid point `index`.
    pub fn config_at(&self, index: usize) -> Result<ExperimentConfig, SimulationError> {
        let value = self.grid[index];
        let mut cfg = self.base.clone();
        match self.variable {
            SweepVariable::Rho => cfg.corruption.rho = value,
            SweepVariable::SampleSize => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(SimulationError::InvalidSweep(format!(
                        "sample size {value} is not a positive integer"
                    )));
                }
                if matches!(cfg.scheme, SchemeRule::Explicit(_)) {
                    return Err(SimulationError::InvalidSweep(
                        "a sample-size sweep needs a censoring fraction, not a fixed plan".into(),
                    ));
                }
                cfg.n = value as usize;
            }
        }
        Ok(cfg)
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub grid_index: usize,
    pub value: f64,
    pub result: ReplicationResult,
}

/// Mean and spread of RABias for one (grid point, method, parameter).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCell {
    pub value: f64,
    pub method: LabelMode,
    /// `lambda_k` or `xi_k`, 1-based.
    pub parameter: String,
    pub mean: f64,
    /// Sample standard deviation across successful replications (0 for one).
    pub sd: f64,
    pub successes: usize,
    pub failures: usize,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RabiasReport {
    pub variable: SweepVariable,
    pub cells: Vec<ReportCell>,
}

impl RabiasReport {
    pub fn cell(&self, value: f64, method: LabelMode, parameter: &str) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.value == value && c.method == method && c.parameter == parameter)
    }

    /// Mean RABias of `parameter` along the grid for one method.
    pub fn curve(&self, method: LabelMode, parameter: &str) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.method == method && c.parameter == parameter)
            .map(|c| (c.value, c.mean))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub report: RabiasReport,
    /// (grid value, effective Beta sd) per grid point.
    pub effective_sd: Vec<(f64, f64)>,
}

/// Runs every (grid point, method, replication) on `workers` threads (0 means
/// one per processor) and aggregates RABias. The outcome depends only on
/// `spec` and `master_seed`.
pub fn run_sweep(
    spec: &SweepSpec,
    master_seed: u64,
    workers: usize,
) -> Result<SweepOutcome, SimulationError> {
    spec.validate()?;
    let configs: Vec<ExperimentConfig> = (0..spec.grid.len())
        .map(|i| spec.config_at(i))
        .collect::<Result<_, _>>()?;
    let tasks: Vec<(usize, LabelMode, usize)> = (0..spec.grid.len())
        .flat_map(|g| {
            spec.methods
                .iter()
                .flat_map(move |&m| (0..spec.reps).map(move |r| (g, m, r)))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimulationError::Pool(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(g, method, rep)| {
                let mut rng = replication_rng(master_seed, g, rep);
                SweepRow {
                    grid_index: g,
                    value: spec.grid[g],
                    result: run_replication(&configs[g], method, rep, &mut rng),
                }
            })
            .collect()
    });

    let report = aggregate(spec, &rows);
    let effective_sd = spec
        .grid
        .iter()
        .zip(&configs)
        .map(|(&v, c)| (v, c.corruption.effective_sd()))
        .collect();
    Ok(SweepOutcome {
        rows,
        report,
        effective_sd,
    })
}

fn aggregate(spec: &SweepSpec, rows: &[SweepRow]) -> RabiasReport {
    let p = spec.base.truth.len();
    let mut cells = Vec::new();
    for (g, &value) in spec.grid.iter().enumerate() {
        for &method in &spec.methods {
            let cell_rows: Vec<&ReplicationResult> = rows
                .iter()
                .filter(|r| r.grid_index == g && r.result.method == method)
                .map(|r| &r.result)
                .collect();
            let ok: Vec<&FitSummary> = cell_rows
                .iter()
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let failures = cell_rows.len() - ok.len();
            let unreliable =
                failures as f64 > UNRELIABLE_FAILURE_SHARE * cell_rows.len() as f64;
            let params = (0..p)
                .map(|z| (format!("lambda_{}", z + 1), z, true))
                .chain((0..p).map(|z| (format!("xi_{}", z + 1), z, false)));
            for (name, z, is_lambda) in params {
                let values: Vec<f64> = ok
                    .iter()
                    .map(|s| if is_lambda { s.rabias_lambda[z] } else { s.rabias_xi[z] })
                    .collect();
                let (mean, sd) = mean_sd(&values);
                cells.push(ReportCell {
                    value,
                    method,
                    parameter: name,
                    mean,
                    sd,
                    successes: ok.len(),
                    failures,
                    unreliable,
                });
            }
        }
    }
    RabiasReport {
        variable: spec.variable,
        cells,
    }
}

/// Mean and sample standard deviation; NaN mean for no data, sd 0 for one value.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
