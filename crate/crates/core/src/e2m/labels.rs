//! Soft labels for the three estimation regimes.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::belief::{BeliefError, ContourFunction};

/// How prior label knowledge enters the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Plausibilities derived from each item's error probability.
    Uncertain,
    /// The corrupted hard label, taken as certain.
    Noisy,
    /// No label information (classical EM).
    Unknown,
}

impl LabelMode {
    pub const ALL: [LabelMode; 3] = [LabelMode::Uncertain, LabelMode::Noisy, LabelMode::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::Uncertain => "uncertain",
            LabelMode::Noisy => "noisy",
            LabelMode::Unknown => "unknown",
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncertain" => Ok(LabelMode::Uncertain),
            "noisy" => Ok(LabelMode::Noisy),
            "unknown" => Ok(LabelMode::Unknown),
            other => Err(format!(
                "unknown label mode {other:?} (expected uncertain, noisy or unknown)"
            )),
        }
    }
}

/// Output of the label-corruption protocol, one entry per record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCorruption {
    /// Per-item error probabilities q_j.
    pub error_probs: Vec<f64>,
    /// Hard labels after corruption, 0-based.
    pub noisy_labels: Vec<usize>,
    /// pl_j(z) = q_j/p + (1 − q_j)·1{z = noisy label}.
    pub plausibilities: Vec<ContourFunction>,
}

/// The contour q/p + (1 − q)·1{z = label} over a frame of size `p`.
pub fn error_contour(q: f64, label: usize, p: usize) -> Result<ContourFunction, BeliefError> {
    let base = q / p as f64;
    let mut pl = vec![base; p];
    if label >= p {
        return Err(BeliefError::InvalidContour(format!(
            "label {label} outside a frame of size {p}"
        )));
    }
    pl[label] = base + (1.0 - q);
    ContourFunction::new(pl)
}

/// Soft labels for `mode`. `Unknown` only needs the record count and frame size;
/// the other two modes read the corruption output.
pub fn make_soft_labels(
    mode: LabelMode,
    n: usize,
    p: usize,
    corruption: Option<&LabelCorruption>,
) -> Result<Vec<ContourFunction>, BeliefError> {
    match mode {
        LabelMode::Unknown => (0..n).map(|_| ContourFunction::vacuous(p)).collect(),
        LabelMode::Uncertain => {
            let c = corruption.ok_or_else(|| {
                BeliefError::InvalidContour("uncertain labels need corruption output".into())
            })?;
            Ok(c.plausibilities.clone())
        }
        LabelMode::Noisy => {
            let c = corruption.ok_or_else(|| {
                BeliefError::InvalidContour("noisy labels need corruption output".into())
            })?;
            c.noisy_labels
                .iter()
                .map(|&z| ContourFunction::certain(p, z))
                .collect()
        }
    }
}
