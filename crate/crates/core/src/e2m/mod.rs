//! Evidential EM for Rayleigh mixtures under progressive censoring.
//!
//! Each record j carries a contour function pl_j over component labels. The
//! generalized observed-data log-likelihood is
//!
//! ```text
//! ℓ(θ) = Σ_{j observed} ln Σ_z λ_z f(y*ⱼ; ξ_z) pl_j(z)
//!      + Σ_{j censored} ln Σ_z λ_z F̄(y*ⱼ; ξ_z) pl_j(z)
//! ```
//!
//! The E-step combines the model posterior of each label with pl_j by
//! Dempster's rule (a Bayesian ⊕ contour product, normalized). The M-step
//! is closed form: λ_z is the mean weight of component z, and
//!
//! ```text
//! ξ_z² = 2 Σ_j W_jz / ( Σ_{obs} W_jz y*ⱼ² + Σ_{cens} W_jz (y*ⱼ² + 2/ξ_z²) )
//! ```
//!
//! where the censored term is E[X² | X > y*ⱼ] under the current ξ_z.

mod labels;

pub use labels::{error_contour, make_soft_labels, LabelCorruption, LabelMode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{bayes_contour_combine_ln, BeliefError, ContourFunction};
use crate::censoring::{CensoredDataset, Status};
use crate::lifetime::{LifetimeDistribution, MixtureParams, ModelError};
use crate::math::{ln_or_neg_inf, log_sum_exp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum E2mError {
    #[error("{labels} soft labels for {records} records")]
    LabelCount { labels: usize, records: usize },
    #[error("record {record} has a contour on {got} labels, expected {expected}")]
    FrameMismatch {
        record: usize,
        expected: usize,
        got: usize,
    },
    #[error("posterior matrix is {rows}x{cols}, expected {records}x{components}")]
    PosteriorShape {
        rows: usize,
        cols: usize,
        records: usize,
        components: usize,
    },
    #[error("likelihood of record {record} (item {item_id}) is zero")]
    DegenerateLikelihood { record: usize, item_id: usize },
    #[error("total conflict between model posterior and soft label at record {record} (item {item_id})")]
    TotalConflict { record: usize, item_id: usize },
    #[error("component {component} is starved (total weight {weight:e})")]
    ComponentStarved { component: usize, weight: f64 },
    #[error("generalized log-likelihood became non-finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// A censored dataset with one contour function per record.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabeledDataset {
    data: CensoredDataset,
    labels: Vec<ContourFunction>,
}

impl SoftLabeledDataset {
    pub fn new(data: CensoredDataset, labels: Vec<ContourFunction>) -> Result<Self, E2mError> {
        if labels.len() != data.len() {
            return Err(E2mError::LabelCount {
                labels: labels.len(),
                records: data.len(),
            });
        }
        if let Some(first) = labels.first() {
            let p = first.frame().size();
            if let Some((record, c)) = labels
                .iter()
                .enumerate()
                .find(|(_, c)| c.frame().size() != p)
            {
                return Err(E2mError::FrameMismatch {
                    record,
                    expected: p,
                    got: c.frame().size(),
                });
            }
        }
        Ok(Self { data, labels })
    }

    pub fn data(&self) -> &CensoredDataset {
        &self.data
    }

    pub fn labels(&self) -> &[ContourFunction] {
        &self.labels
    }

    /// Number of components implied by the soft labels.
    pub fn components(&self) -> usize {
        self.labels.first().map_or(0, |c| c.frame().size())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn check_params(&self, theta: &MixtureParams) -> Result<(), E2mError> {
        if theta.len() != self.components() {
            return Err(E2mError::FrameMismatch {
                record: 0,
                expected: theta.len(),
                got: self.components(),
            });
        }
        Ok(())
    }

    /// ln λ_z + ln f(y*; ξ_z) for observed records, ln λ_z + ln F̄(y*; ξ_z) for censored ones.
    fn ln_base(&self, theta: &MixtureParams, record: usize, out: &mut [f64]) {
        let r = &self.data.records()[record];
        for (z, (c, &l)) in theta.components().iter().zip(theta.lambdas()).enumerate() {
            let g = match r.status {
                Status::Observed => c.ln_pdf(r.y_star),
                Status::Censored => c.ln_survival(r.y_star),
            };
            out[z] = ln_or_neg_inf(l) + g;
        }
    }
}

/// Stopping and safety settings for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E2mConfig {
    pub max_iters: usize,
    /// Stop once (ℓ_{k+1} − ℓ_k) ≤ tol·|ℓ_{k+1}|.
    pub tol: f64,
    /// A component is starved when its total posterior weight falls below floor·n.
    pub floor: f64,
}

impl Default for E2mConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            floor: 1e-10,
        }
    }
}

impl E2mConfig {
    pub fn validate(&self) -> Result<(), E2mError> {
        if self.max_iters == 0 {
            return Err(E2mError::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(E2mError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.floor >= 0.0) {
            return Err(E2mError::Config(format!(
                "floor must be nonnegative, got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

/// Row-stochastic n × p matrix of combined label posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    components: usize,
    weights: Vec<f64>,
}

impl Posterior {
    /// Builds a posterior from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, E2mError> {
        let components = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != components) {
            return Err(E2mError::Config("posterior rows differ in length".into()));
        }
        Ok(Self {
            components,
            weights: rows.concat(),
        })
    }

    pub fn records(&self) -> usize {
        if self.components == 0 {
            0
        } else {
            self.weights.len() / self.components
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn row(&self, record: usize) -> &[f64] {
        &self.weights[record * self.components..(record + 1) * self.components]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks(self.components)
    }
}

/// ℓ(θ), computed record by record with log-sum-exp.
///
/// A record whose inner sum vanishes makes ℓ = −∞; that is reported as
/// [`E2mError::DegenerateLikelihood`] naming the first such record.
pub fn generalized_loglik(ds: &SoftLabeledDataset, theta: &MixtureParams) -> Result<f64, E2mError> {
    ds.check_params(theta)?;
    let p = theta.len();
    let mut terms = vec![0.0; p];
    let mut total = 0.0;
    for (j, pl) in ds.labels.iter().enumerate() {
        ds.ln_base(theta, j, &mut terms);
        for (t, &v) in terms.iter_mut().zip(pl.values()) {
            *t += ln_or_neg_inf(v);
        }
        let lj = log_sum_exp(&terms);
        if lj == f64::NEG_INFINITY {
            return Err(E2mError::DegenerateLikelihood {
                record: j,
                item_id: ds.data.records()[j].item_id,
            });
        }
        total += lj;
    }
    Ok(total)
}

/// Posterior label weights: the model posterior (density-based for observed
/// records, survival-based for censored ones) combined with pl_j.
pub fn e_step(ds: &SoftLabeledDataset, theta: &MixtureParams) -> Result<Posterior, E2mError> {
    ds.check_params(theta)?;
    let p = theta.len();
    let mut weights = Vec::with_capacity(ds.len() * p);
    let mut ln_base = vec![0.0; p];
    for (j, pl) in ds.labels.iter().enumerate() {
        ds.ln_base(theta, j, &mut ln_base);
        let row = bayes_contour_combine_ln(&ln_base, pl).map_err(|e| match e {
            BeliefError::TotalConflict(_) => E2mError::TotalConflict {
                record: j,
                item_id: ds.data.records()[j].item_id,
            },
            other => other.into(),
        })?;
        weights.extend(row);
    }
    Ok(Posterior {
        components: p,
        weights,
    })
}

/// Closed-form maximizer of the expected complete-data log-likelihood.
pub fn m_step(
    ds: &SoftLabeledDataset,
    posterior: &Posterior,
    current: &MixtureParams,
) -> Result<MixtureParams, E2mError> {
    m_step_with_floor(ds, posterior, current, E2mConfig::default().floor)
}

/// [`m_step`] with an explicit starvation floor.
pub fn m_step_with_floor(
    ds: &SoftLabeledDataset,
    posterior: &Posterior,
    current: &MixtureParams,
    floor: f64,
) -> Result<MixtureParams, E2mError> {
    ds.check_params(current)?;
    let p = current.len();
    let n = ds.len();
    if posterior.components() != p || posterior.records() != n {
        return Err(E2mError::PosteriorShape {
            rows: posterior.records(),
            cols: posterior.components(),
            records: n,
            components: p,
        });
    }
    let mut mass = vec![0.0; p];
    let mut second_moment = vec![0.0; p];
    for (r, row) in ds.data.records().iter().zip(posterior.rows()) {
        for z in 0..p {
            let w = row[z];
            mass[z] += w;
            second_moment[z] += w * match r.status {
                Status::Observed => r.y_star * r.y_star,
                Status::Censored => current.components()[z].truncated_second_moment(r.y_star)?,
            };
        }
    }
    let mut lambdas = Vec::with_capacity(p);
    let mut xis = Vec::with_capacity(p);
    for z in 0..p {
        if mass[z] < floor * n as f64 || !(second_moment[z] > 0.0) {
            return Err(E2mError::ComponentStarved {
                component: z,
                weight: mass[z],
            });
        }
        lambdas.push(mass[z] / n as f64);
        xis.push((2.0 * mass[z] / second_moment[z]).sqrt());
    }
    Ok(MixtureParams::new(lambdas, xis)?)
}

/// One point of the iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub params: MixtureParams,
    pub gll: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct E2mTrace {
    /// θ⁰ first, then one entry per completed E/M iteration.
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl E2mTrace {
    pub fn final_gll(&self) -> Option<f64> {
        self.iterates.last().map(|it| it.gll)
    }
}

/// A failed fit, with the history up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error} (after {} iterations)", trace.iterations_used)]
pub struct FitError {
    #[source]
    pub error: E2mError,
    pub trace: E2mTrace,
}

/// Alternates E- and M-steps from `init` until the relative increase of ℓ
/// drops to `cfg.tol` or `cfg.max_iters` iterations have run.
pub fn fit(
    ds: &SoftLabeledDataset,
    init: &MixtureParams,
    cfg: &E2mConfig,
) -> Result<(MixtureParams, E2mTrace), FitError> {
    let mut trace = E2mTrace::default();
    let fail = |error: E2mError, trace: E2mTrace| FitError { error, trace };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace));
    }
    let mut theta = init.clone();
    let mut gll = match generalized_loglik(ds, &theta) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => return Err(fail(E2mError::NonFinite { iteration: 0 }, trace)),
        Err(e) => return Err(fail(e, trace)),
    };
    trace.iterates.push(Iterate {
        params: theta.clone(),
        gll,
    });
    for iteration in 1..=cfg.max_iters {
        let step = e_step(ds, &theta)
            .and_then(|w| m_step_with_floor(ds, &w, &theta, cfg.floor))
            .and_then(|next| generalized_loglik(ds, &next).map(|g| (next, g)));
        let (next, next_gll) = match step {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trace)),
        };
        if !next_gll.is_finite() {
            return Err(fail(E2mError::NonFinite { iteration }, trace));
        }
        trace.iterates.push(Iterate {
            params: next.clone(),
            gll: next_gll,
        });
        trace.iterations_used = iteration;
        let improvement = next_gll - gll;
        theta = next;
        gll = next_gll;
        if improvement <= cfg.tol * gll.abs() {
            trace.converged = true;
            break;
        }
    }
    Ok((theta, trace))
}

/// A generic starting point: uniform weights, and ξ⁰_z matching the median of
/// a Rayleigh component to the ((z + ½)/p)-quantile of the observed times.
pub fn quantile_spread_init(data: &CensoredDataset, components: usize) -> Result<MixtureParams, E2mError> {
    if components == 0 {
        return Err(E2mError::Config("need at least one component".into()));
    }
    let mut times: Vec<f64> = data
        .observed_times()
        .into_iter()
        .filter(|&t| t > 0.0)
        .collect();
    if times.is_empty() {
        return Err(E2mError::Config("no positive observed failure times".into()));
    }
    times.sort_by(f64::total_cmp);
    let median_factor = (2.0 * std::f64::consts::LN_2).sqrt();
    let xis = (0..components)
        .map(|z| {
            let level = (z as f64 + 0.5) / components as f64;
            let idx = ((level * times.len() as f64) as usize).min(times.len() - 1);
            median_factor / times[idx]
        })
        .collect();
    Ok(MixtureParams::new(vec![1.0 / components as f64; components], xis)?)
}

/// The reproduction-protocol start: λ⁰ = λ, ξ⁰ = ξ − offset.
pub fn offset_init(truth: &MixtureParams, offset: f64) -> Result<MixtureParams, E2mError> {
    let xis = truth.xis().into_iter().map(|x| x - offset).collect();
    Ok(MixtureParams::new(truth.lambdas().to_vec(), xis)?)
}
