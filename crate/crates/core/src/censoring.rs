//! Progressive Type-II censoring: scheme validation, physical replay of a
//! life test, and the exact observed-data log-likelihood.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lifetime::LifetimeDistribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CensoringError {
    #[error("scheme must observe at least one failure")]
    NoFailures,
    #[error("scheme observes {failures} failures but only {n} units are on test")]
    TooManyFailures { failures: usize, n: usize },
    #[error("scheme declares J = {declared} but lists {listed} removal counts")]
    LengthMismatch { declared: usize, listed: usize },
    #[error("removals plus failures total {total}, but n = {n}")]
    TotalMismatch { n: usize, total: usize },
    #[error("censoring fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("life test needs {expected} units, got {got}")]
    WrongUnitCount { expected: usize, got: usize },
    #[error("expected {expected} observed failure times, got {got}")]
    WrongTimeCount { expected: usize, got: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

/// The plan (n, J, R₁..R_J): after the j-th observed failure, Rⱼ surviving
/// units are withdrawn. Σ Rⱼ + J = n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct CensoringScheme {
    n: usize,
    removals: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    n: usize,
    #[serde(rename = "J")]
    failures: usize,
    #[serde(rename = "R")]
    removals: Vec<usize>,
}

impl TryFrom<RawScheme> for CensoringScheme {
    type Error = CensoringError;

    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        CensoringScheme::new(raw.n, raw.failures, raw.removals)
    }
}

impl From<CensoringScheme> for RawScheme {
    fn from(s: CensoringScheme) -> Self {
        RawScheme {
            n: s.n,
            failures: s.removals.len(),
            removals: s.removals,
        }
    }
}

impl CensoringScheme {
    /// Validates and builds a scheme with `failures` = J observed failures.
    pub fn new(n: usize, failures: usize, removals: Vec<usize>) -> Result<Self, CensoringError> {
        Self::validate(n, failures, &removals)?;
        Ok(Self { n, removals })
    }

    pub fn validate(n: usize, failures: usize, removals: &[usize]) -> Result<(), CensoringError> {
        if failures == 0 {
            return Err(CensoringError::NoFailures);
        }
        if failures > n {
            return Err(CensoringError::TooManyFailures { failures, n });
        }
        if removals.len() != failures {
            return Err(CensoringError::LengthMismatch {
                declared: failures,
                listed: removals.len(),
            });
        }
        let total = removals.iter().sum::<usize>() + failures;
        if total != n {
            return Err(CensoringError::TotalMismatch { n, total });
        }
        Ok(())
    }

    /// Conventional Type-II censoring: R = (0, …, 0, n − J).
    pub fn conventional(n: usize, failures: usize) -> Result<Self, CensoringError> {
        if failures == 0 {
            return Err(CensoringError::NoFailures);
        }
        if failures > n {
            return Err(CensoringError::TooManyFailures { failures, n });
        }
        let mut removals = vec![0; failures];
        removals[failures - 1] = n - failures;
        Self::new(n, failures, removals)
    }

    /// R = (0, …, 0, n − m) with m = ⌈n·(1 − censor_frac)⌉ observed failures.
    pub fn from_censor_fraction(n: usize, censor_frac: f64) -> Result<Self, CensoringError> {
        if !(0.0..1.0).contains(&censor_frac) {
            return Err(CensoringError::InvalidFraction(censor_frac));
        }
        // The slack keeps products like 500 × 0.6 from rounding up past an integer.
        let m = (n as f64 * (1.0 - censor_frac) - 1e-9).ceil().max(1.0) as usize;
        Self::conventional(n, m.min(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// J, the number of observed failures.
    pub fn failures(&self) -> usize {
        self.removals.len()
    }

    pub fn removals(&self) -> &[usize] {
        &self.removals
    }

    /// ln C with C = Π_{j=1}^{J} (n − j + 1 − Σ_{i<j} Rᵢ).
    pub fn ln_constant(&self) -> f64 {
        let mut removed = 0usize;
        let mut total = 0.0;
        for (j, &r) in self.removals.iter().enumerate() {
            total += ((self.n - j - removed) as f64).ln();
            removed += r;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Observed,
    Censored,
}

/// One unit of a censored life test.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Position of the unit in the input sample.
    pub item_id: usize,
    /// Failure time if observed, withdrawal time if censored.
    pub y_star: f64,
    pub status: Status,
    /// 0-based component label, when known to the simulator.
    pub true_label: Option<usize>,
    /// 1-based index j of the failure at which a censored unit was withdrawn.
    pub censored_at: Option<usize>,
}

impl Record {
    pub fn is_observed(&self) -> bool {
        self.status == Status::Observed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoredDataset {
    scheme: CensoringScheme,
    records: Vec<Record>,
}

impl CensoredDataset {
    /// Checks the record set against the scheme: J observed records with
    /// times nondecreasing in failure order, Rⱼ records withdrawn at failure j
    /// carrying that failure's time.
    pub fn new(scheme: CensoringScheme, records: Vec<Record>) -> Result<Self, CensoringError> {
        let bad = |msg: String| Err(CensoringError::InvalidDataset(msg));
        if records.len() != scheme.n() {
            return bad(format!(
                "{} records for a scheme with n = {}",
                records.len(),
                scheme.n()
            ));
        }
        if let Some(r) = records.iter().find(|r| !(r.y_star >= 0.0) || !r.y_star.is_finite()) {
            return bad(format!("item {} has invalid time {}", r.item_id, r.y_star));
        }
        let observed: Vec<f64> = records
            .iter()
            .filter(|r| r.is_observed())
            .map(|r| r.y_star)
            .collect();
        if observed.len() != scheme.failures() {
            return bad(format!(
                "{} observed records, scheme expects {}",
                observed.len(),
                scheme.failures()
            ));
        }
        if observed.windows(2).any(|w| w[1] < w[0]) {
            return bad("observed failure times are not in failure order".into());
        }
        let mut withdrawn = vec![0usize; scheme.failures()];
        for r in records.iter().filter(|r| !r.is_observed()) {
            let Some(j) = r.censored_at.filter(|&j| (1..=scheme.failures()).contains(&j)) else {
                return bad(format!("censored item {} has no valid failure index", r.item_id));
            };
            if r.y_star != observed[j - 1] {
                return bad(format!(
                    "censored item {} carries time {} but failure {j} occurred at {}",
                    r.item_id,
                    r.y_star,
                    observed[j - 1]
                ));
            }
            withdrawn[j - 1] += 1;
        }
        if withdrawn != scheme.removals() {
            return bad("withdrawal counts do not match the scheme".into());
        }
        Ok(Self { scheme, records })
    }

    pub fn scheme(&self) -> &CensoringScheme {
        &self.scheme
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The observed failure times in failure order.
    pub fn observed_times(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.is_observed())
            .map(|r| r.y_star)
            .collect()
    }

    /// Every time multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| Record {
                y_star: r.y_star * factor,
                ..r.clone()
            })
            .collect();
        Self {
            scheme: self.scheme.clone(),
            records,
        }
    }
}

/// Replays a progressive Type-II life test on `units` (lifetime, label).
///
/// At each stage the shortest remaining lifetime fails; then Rⱼ of the
/// survivors are withdrawn uniformly at random. Records come out in event
/// order: failure j followed by its withdrawals. Equal lifetimes fail in
/// input order.
pub fn run_life_test<R: Rng + ?Sized>(
    units: &[(f64, usize)],
    scheme: &CensoringScheme,
    rng: &mut R,
) -> Result<CensoredDataset, CensoringError> {
    if units.len() != scheme.n() {
        return Err(CensoringError::WrongUnitCount {
            expected: scheme.n(),
            got: units.len(),
        });
    }
    let mut alive: Vec<usize> = (0..units.len()).collect();
    alive.sort_by(|&a, &b| units[a].0.total_cmp(&units[b].0).then(a.cmp(&b)));

    let mut records = Vec::with_capacity(units.len());
    for (stage, &removals) in scheme.removals().iter().enumerate() {
        let failed = alive.remove(0);
        let time = units[failed].0;
        records.push(Record {
            item_id: failed,
            y_star: time,
            status: Status::Observed,
            true_label: Some(units[failed].1),
            censored_at: None,
        });
        if removals == 0 {
            continue;
        }
        let mut picked = index::sample(rng, alive.len(), removals).into_vec();
        picked.sort_unstable();
        for &pos in &picked {
            let item = alive[pos];
            records.push(Record {
                item_id: item,
                y_star: time,
                status: Status::Censored,
                true_label: Some(units[item].1),
                censored_at: Some(stage + 1),
            });
        }
        for &pos in picked.iter().rev() {
            alive.remove(pos);
        }
    }
    debug_assert!(alive.is_empty());
    CensoredDataset::new(scheme.clone(), records)
}

/// ln L = ln C + Σⱼ [ln f(xⱼ) + Rⱼ ln F̄(xⱼ)] for the observed failure times.
///
/// Times may be given in any order; they are sorted before being paired with
/// the removal counts. A zero survival at a stage with withdrawals yields −∞.
pub fn progressive_loglik<D: LifetimeDistribution + ?Sized>(
    scheme: &CensoringScheme,
    observed_times: &[f64],
    model: &D,
) -> Result<f64, CensoringError> {
    if observed_times.len() != scheme.failures() {
        return Err(CensoringError::WrongTimeCount {
            expected: scheme.failures(),
            got: observed_times.len(),
        });
    }
    let mut times = observed_times.to_vec();
    times.sort_by(f64::total_cmp);
    let mut total = scheme.ln_constant();
    for (&x, &r) in times.iter().zip(scheme.removals()) {
        total += model.ln_pdf(x);
        if r > 0 {
            total += r as f64 * model.ln_survival(x);
        }
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}
