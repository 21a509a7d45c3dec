//! Rayleigh components and finite Rayleigh mixtures.
//!
//! A component with rate-like parameter ξ has density
//! `f(x; ξ) = ξ² x exp(−ξ² x² / 2)` on x > 0 and survival
//! `F̄(x; ξ) = exp(−ξ² x² / 2)`. Since X² is exponential with rate ξ²/2,
//! E[X² | X > y] = y² + 2/ξ² in closed form.

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{ln_or_neg_inf, log_sum_exp};

/// Tolerance on Σ λ_z = 1.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("Rayleigh parameter must be positive and finite, got {0}")]
    InvalidXi(f64),
    #[error("density is only defined for x > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("probability must lie strictly between 0 and 1, got {0}")]
    InvalidProbability(f64),
    #[error("mixture needs matching, nonempty weight and parameter vectors ({weights} vs {xis})")]
    ShapeMismatch { weights: usize, xis: usize },
    #[error("invalid mixing weights: {0}")]
    InvalidWeights(String),
}

/// Log-density and log-survival of a positive lifetime distribution.
///
/// This is the seam through which the censored likelihood consumes a model;
/// only Rayleigh components and their mixtures implement it today.
pub trait LifetimeDistribution {
    /// ln f(x); −∞ outside the support.
    fn ln_pdf(&self, x: f64) -> f64;
    /// ln F̄(x) = ln P(X > x).
    fn ln_survival(&self, x: f64) -> f64;
}

/// One Rayleigh component, parametrized by ξ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rayleigh {
    xi: f64,
}

impl TryFrom<f64> for Rayleigh {
    type Error = ModelError;

    fn try_from(xi: f64) -> Result<Self, Self::Error> {
        Rayleigh::new(xi)
    }
}

impl From<Rayleigh> for f64 {
    fn from(r: Rayleigh) -> f64 {
        r.xi
    }
}

impl Rayleigh {
    pub fn new(xi: f64) -> Result<Self, ModelError> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(ModelError::InvalidXi(xi));
        }
        Ok(Self { xi })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn pdf(&self, x: f64) -> Result<f64, ModelError> {
        if !(x > 0.0) {
            return Err(ModelError::NonPositiveTime(x));
        }
        let s = self.xi * self.xi;
        Ok(s * x * (-0.5 * s * x * x).exp())
    }

    pub fn survival(&self, x: f64) -> Result<f64, ModelError> {
        if !(x >= 0.0) {
            return Err(ModelError::NegativeTime(x));
        }
        Ok((-0.5 * self.xi * self.xi * x * x).exp())
    }

    pub fn cdf(&self, x: f64) -> Result<f64, ModelError> {
        if !(x >= 0.0) {
            return Err(ModelError::NegativeTime(x));
        }
        Ok(-(-0.5 * self.xi * self.xi * x * x).exp_m1())
    }

    /// Inverse CDF: x = √(−2 ln(1−u)) / ξ.
    pub fn quantile(&self, u: f64) -> Result<f64, ModelError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(ModelError::InvalidProbability(u));
        }
        Ok((-2.0 * (-u).ln_1p()).sqrt() / self.xi)
    }

    /// E[X² | X > y] = y² + 2/ξ².
    pub fn truncated_second_moment(&self, y: f64) -> Result<f64, ModelError> {
        if !(y >= 0.0) {
            return Err(ModelError::NegativeTime(y));
        }
        Ok(y * y + 2.0 / (self.xi * self.xi))
    }

    /// Inverse-transform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        (-2.0 * (-u).ln_1p()).sqrt() / self.xi
    }
}

impl LifetimeDistribution for Rayleigh {
    fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        2.0 * self.xi.ln() + x.ln() - 0.5 * self.xi * self.xi * x * x
    }

    fn ln_survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        -0.5 * self.xi * self.xi * x * x
    }
}

/// θ = (λ₁..λ_p, ξ₁..ξ_p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct MixtureParams {
    lambdas: Vec<f64>,
    components: Vec<Rayleigh>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    lambdas: Vec<f64>,
    xis: Vec<f64>,
}

impl TryFrom<RawMixture> for MixtureParams {
    type Error = ModelError;

    fn try_from(raw: RawMixture) -> Result<Self, Self::Error> {
        MixtureParams::new(raw.lambdas, raw.xis)
    }
}

impl From<MixtureParams> for RawMixture {
    fn from(m: MixtureParams) -> Self {
        RawMixture {
            xis: m.xis(),
            lambdas: m.lambdas,
        }
    }
}

impl MixtureParams {
    pub fn new(lambdas: Vec<f64>, xis: Vec<f64>) -> Result<Self, ModelError> {
        if lambdas.is_empty() || lambdas.len() != xis.len() {
            return Err(ModelError::ShapeMismatch {
                weights: lambdas.len(),
                xis: xis.len(),
            });
        }
        if let Some(bad) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(ModelError::InvalidWeights(format!(
                "weight {bad} is negative or not finite"
            )));
        }
        let total: f64 = lambdas.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ModelError::InvalidWeights(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let components = xis
            .into_iter()
            .map(Rayleigh::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            lambdas,
            components,
        })
    }

    /// A single-component "mixture".
    pub fn single(xi: f64) -> Result<Self, ModelError> {
        Self::new(vec![1.0], vec![xi])
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn components(&self) -> &[Rayleigh] {
        &self.components
    }

    pub fn xis(&self) -> Vec<f64> {
        self.components.iter().map(Rayleigh::xi).collect()
    }

    /// Reorders components so that component `z` of the result is component
    /// `order[z]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            lambdas: order.iter().map(|&z| self.lambdas[z]).collect(),
            components: order.iter().map(|&z| self.components[z]).collect(),
        }
    }

    /// Σ_z λ_z f(x; ξ_z).
    pub fn pdf(&self, x: f64) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (l, c) in self.lambdas.iter().zip(&self.components) {
            total += l * c.pdf(x)?;
        }
        Ok(total)
    }

    pub fn survival(&self, x: f64) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (l, c) in self.lambdas.iter().zip(&self.components) {
            total += l * c.survival(x)?;
        }
        Ok(total)
    }

    /// Draws `n` i.i.d. (lifetime, 0-based component label) pairs.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, usize)> {
        // Weights are validated nonnegative with unit sum, so this cannot fail.
        let labels = WeightedIndex::new(&self.lambdas).expect("validated mixing weights");
        (0..n)
            .map(|_| {
                let z = labels.sample(rng);
                (self.components[z].sample(rng), z)
            })
            .collect()
    }
}

impl LifetimeDistribution for MixtureParams {
    fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.components)
            .map(|(&l, c)| ln_or_neg_inf(l) + c.ln_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    fn ln_survival(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.components)
            .map(|(&l, c)| ln_or_neg_inf(l) + c.ln_survival(x))
            .collect();
        log_sum_exp(&terms)
    }
}
