//! Finite-frame Dempster–Shafer primitives.
//!
//! Subsets of the label frame are bitmasks ([`LabelSet`]). Mass functions are
//! sparse maps from focal sets to mass. The estimator only ever needs the
//! Bayesian ⊕ contour fast path ([`bayes_contour_combine`] and its log-space
//! twin); the full conjunctive rule ([`dempster_combine`]) is kept for
//! completeness and as the brute-force reference for that fast path.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Largest frame representable by a `u64` bitmask.
pub const MAX_FRAME_SIZE: usize = 64;

/// Tolerance on Σ m(A) = 1 and Σ p(z) = 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Combination fails with total conflict only when k > 1 − this.
pub const CONFLICT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("frame size must be between 1 and {MAX_FRAME_SIZE}, got {0}")]
    FrameSize(usize),
    #[error("the empty set is not a valid argument")]
    EmptySet,
    #[error("subset {set:#b} is not contained in a frame of size {frame}")]
    OutsideFrame { set: u64, frame: usize },
    #[error("frames differ: {0} vs {1}")]
    FrameMismatch(usize, usize),
    #[error("invalid mass {mass} on subset {set:#b}")]
    InvalidMass { set: u64, mass: f64 },
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("invalid contour function: {0}")]
    InvalidContour(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("total conflict between the combined pieces of evidence (k = {0})")]
    TotalConflict(f64),
}

/// The discernment frame {θ₁, …, θ_p} of component labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame {
    size: usize,
}

impl Frame {
    pub fn new(size: usize) -> Result<Self, BeliefError> {
        if size == 0 || size > MAX_FRAME_SIZE {
            return Err(BeliefError::FrameSize(size));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// The whole frame Θ as a set.
    pub fn full(&self) -> LabelSet {
        if self.size == 64 {
            LabelSet(u64::MAX)
        } else {
            LabelSet((1u64 << self.size) - 1)
        }
    }

    pub fn contains(&self, set: LabelSet) -> bool {
        set.0 & !self.full().0 == 0
    }

    /// Every nonempty subset of the frame, in bitmask order. Only sensible for small frames.
    pub fn nonempty_subsets(&self) -> impl Iterator<Item = LabelSet> {
        let full = self.full().0;
        (1..=full).map(LabelSet)
    }
}

/// A subset of the frame, bit `z` set iff label `z` (0-based) is a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSet(pub u64);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn singleton(z: usize) -> Self {
        LabelSet(1u64 << z)
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        LabelSet(labels.iter().fold(0u64, |acc, &z| acc | (1u64 << z)))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, z: usize) -> bool {
        self.0 >> z & 1 == 1
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    pub fn is_subset_of(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn complement_in(self, frame: Frame) -> LabelSet {
        LabelSet(frame.full().0 & !self.0)
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<String> = (0..64)
            .filter(|&z| self.contains(z))
            .map(|z| (z + 1).to_string())
            .collect();
        write!(f, "{{{}}}", members.join(","))
    }
}

/// A basic belief assignment on the power set of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction {
    frame: Frame,
    masses: BTreeMap<LabelSet, f64>,
}

impl MassFunction {
    /// Builds a mass function from `(focal set, mass)` pairs. Repeated sets are
    /// accumulated; zero masses are dropped.
    pub fn new<I>(frame: Frame, assignments: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = (LabelSet, f64)>,
    {
        let mut masses = BTreeMap::new();
        for (set, mass) in assignments {
            if !frame.contains(set) {
                return Err(BeliefError::OutsideFrame {
                    set: set.0,
                    frame: frame.size(),
                });
            }
            if !mass.is_finite() || !(0.0..=1.0).contains(&mass) {
                return Err(BeliefError::InvalidMass { set: set.0, mass });
            }
            if mass == 0.0 {
                continue;
            }
            if set.is_empty() {
                return Err(BeliefError::InvalidMass { set: set.0, mass });
            }
            *masses.entry(set).or_insert(0.0) += mass;
        }
        let total: f64 = masses.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(BeliefError::NotNormalized(total));
        }
        Ok(Self { frame, masses })
    }

    /// Total ignorance: m(Θ) = 1.
    pub fn vacuous(frame: Frame) -> Self {
        Self {
            frame,
            masses: BTreeMap::from([(frame.full(), 1.0)]),
        }
    }

    /// All mass on a single set.
    pub fn categorical(frame: Frame, set: LabelSet) -> Result<Self, BeliefError> {
        Self::new(frame, [(set, 1.0)])
    }

    /// The Bayesian mass function whose focal sets are the singletons of `p`.
    pub fn bayesian(p: &ProbabilityVector) -> Self {
        let masses = p
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(z, &v)| (LabelSet::singleton(z), v))
            .collect();
        Self {
            frame: p.frame(),
            masses,
        }
    }

    /// A consonant mass function whose contour is `pl` rescaled so its maximum is 1.
    ///
    /// Focal sets are the nested upper level sets of `pl`.
    pub fn consonant_from_contour(pl: &ContourFunction) -> Self {
        let frame = pl.frame();
        let scale = pl.values().iter().cloned().fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..frame.size()).collect();
        order.sort_by(|&a, &b| pl.values()[b].total_cmp(&pl.values()[a]));
        let mut masses = BTreeMap::new();
        let mut set = LabelSet::EMPTY;
        for (rank, &z) in order.iter().enumerate() {
            set = LabelSet(set.0 | LabelSet::singleton(z).0);
            let here = pl.values()[z] / scale;
            let next = order
                .get(rank + 1)
                .map(|&w| pl.values()[w] / scale)
                .unwrap_or(0.0);
            let mass = here - next;
            if mass > 0.0 {
                masses.insert(set, mass);
            }
        }
        Self { frame, masses }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// m(A); zero for non-focal sets.
    pub fn mass(&self, set: LabelSet) -> f64 {
        self.masses.get(&set).copied().unwrap_or(0.0)
    }

    pub fn focal_elements(&self) -> impl Iterator<Item = (LabelSet, f64)> + '_ {
        self.masses.iter().map(|(&s, &m)| (s, m))
    }

    fn check_argument(&self, set: LabelSet) -> Result<(), BeliefError> {
        if set.is_empty() {
            return Err(BeliefError::EmptySet);
        }
        if !self.frame.contains(set) {
            return Err(BeliefError::OutsideFrame {
                set: set.0,
                frame: self.frame.size(),
            });
        }
        Ok(())
    }

    /// Credibility Bel(A) = Σ_{∅≠B⊆A} m(B).
    pub fn bel(&self, set: LabelSet) -> Result<f64, BeliefError> {
        self.check_argument(set)?;
        Ok(self
            .focal_elements()
            .filter(|(b, _)| !b.is_empty() && b.is_subset_of(set))
            .map(|(_, m)| m)
            .sum())
    }

    /// Plausibility Pl(A) = Σ_{B∩A≠∅} m(B).
    pub fn pl(&self, set: LabelSet) -> Result<f64, BeliefError> {
        self.check_argument(set)?;
        Ok(self
            .focal_elements()
            .filter(|(b, _)| !b.intersection(set).is_empty())
            .map(|(_, m)| m)
            .sum())
    }

    /// The contour function z ↦ Pl({θ_z}).
    pub fn contour(&self) -> ContourFunction {
        let pl = (0..self.frame.size())
            .map(|z| {
                self.focal_elements()
                    .filter(|(b, _)| b.contains(z))
                    .map(|(_, m)| m)
                    .sum::<f64>()
                    .min(1.0)
            })
            .collect();
        ContourFunction {
            frame: self.frame,
            pl,
        }
    }
}

/// Free-function form of [`MassFunction::contour`].
pub fn contour_of(m: &MassFunction) -> ContourFunction {
    m.contour()
}

/// Dempster's rule. Returns the normalized combination and the conflict k
/// (the mass that fell on the empty set before normalization).
pub fn dempster_combine(
    m1: &MassFunction,
    m2: &MassFunction,
) -> Result<(MassFunction, f64), BeliefError> {
    if m1.frame != m2.frame {
        return Err(BeliefError::FrameMismatch(m1.frame.size(), m2.frame.size()));
    }
    let mut joint: BTreeMap<LabelSet, f64> = BTreeMap::new();
    let mut conflict = 0.0;
    for (a, ma) in m1.focal_elements() {
        for (b, mb) in m2.focal_elements() {
            let c = a.intersection(b);
            if c.is_empty() {
                conflict += ma * mb;
            } else {
                *joint.entry(c).or_insert(0.0) += ma * mb;
            }
        }
    }
    if conflict > 1.0 - CONFLICT_TOL {
        return Err(BeliefError::TotalConflict(conflict));
    }
    let norm = 1.0 - conflict;
    for v in joint.values_mut() {
        *v /= norm;
    }
    Ok((
        MassFunction {
            frame: m1.frame,
            masses: joint,
        },
        conflict,
    ))
}

/// Per-label plausibilities pl(z). Unnormalized: entries need not sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourFunction {
    frame: Frame,
    pl: Vec<f64>,
}

impl ContourFunction {
    /// Entries may exceed 1 by at most [`NORMALIZATION_TOL`] (rounding in a
    /// sum of masses); such entries are clamped to 1.
    pub fn new(mut pl: Vec<f64>) -> Result<Self, BeliefError> {
        let frame = Frame::new(pl.len())?;
        if let Some(bad) = pl
            .iter()
            .find(|v| !v.is_finite() || !(0.0..=1.0 + NORMALIZATION_TOL).contains(*v))
        {
            return Err(BeliefError::InvalidContour(format!(
                "entry {bad} outside [0, 1]"
            )));
        }
        if pl.iter().all(|&v| v == 0.0) {
            return Err(BeliefError::InvalidContour(
                "all plausibilities are zero".into(),
            ));
        }
        pl.iter_mut().for_each(|v| *v = v.min(1.0));
        Ok(Self { frame, pl })
    }

    /// pl ≡ 1: no information about the label.
    pub fn vacuous(size: usize) -> Result<Self, BeliefError> {
        Self::new(vec![1.0; size])
    }

    /// pl = indicator of `label`: the label is known.
    pub fn certain(size: usize, label: usize) -> Result<Self, BeliefError> {
        let frame = Frame::new(size)?;
        if label >= size {
            return Err(BeliefError::OutsideFrame {
                set: 1u64.checked_shl(label as u32).unwrap_or(0),
                frame: size,
            });
        }
        let mut pl = vec![0.0; size];
        pl[label] = 1.0;
        Ok(Self { frame, pl })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.pl
    }

    pub fn get(&self, z: usize) -> f64 {
        self.pl[z]
    }
}

/// A Bayesian mass function, i.e. a probability distribution over labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    frame: Frame,
    p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self, BeliefError> {
        let frame = Frame::new(p.len())?;
        if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(BeliefError::InvalidProbability(format!(
                "entry {bad} is negative or not finite"
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(BeliefError::InvalidProbability(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { frame, p })
    }

    /// Normalizes nonnegative weights into a probability vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self, BeliefError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(BeliefError::InvalidProbability(format!(
                "weights sum to {total}"
            )));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(size: usize) -> Result<Self, BeliefError> {
        Frame::new(size)?;
        Self::new(vec![1.0 / size as f64; size])
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn into_values(self) -> Vec<f64> {
        self.p
    }
}

/// p₁ ⊕ pl₂ for a Bayesian p₁: the result is p₁(z)·pl₂(z) normalized, and the
/// conflict is k = 1 − Σ p₁(z)·pl₂(z).
pub fn bayes_contour_combine(
    p1: &ProbabilityVector,
    pl2: &ContourFunction,
) -> Result<(ProbabilityVector, f64), BeliefError> {
    if p1.frame != pl2.frame {
        return Err(BeliefError::FrameMismatch(p1.frame.size(), pl2.frame.size()));
    }
    let products: Vec<f64> = p1.p.iter().zip(&pl2.pl).map(|(a, b)| a * b).collect();
    let agreement: f64 = products.iter().sum();
    let conflict = 1.0 - agreement;
    if !(agreement > 0.0) || conflict > 1.0 - CONFLICT_TOL {
        return Err(BeliefError::TotalConflict(conflict));
    }
    let p = products.into_iter().map(|v| v / agreement).collect();
    Ok((
        ProbabilityVector {
            frame: p1.frame,
            p,
        },
        conflict,
    ))
}

/// Log-space form of [`bayes_contour_combine`] for an unnormalized Bayesian
/// operand given by its log-weights. Returns the normalized combination.
///
/// Normalizing the Bayesian operand first would not change the result, so the
/// weights may be any positive multiple of a probability vector. Entries that
/// underflow in linear space are handled by max-subtraction.
pub fn bayes_contour_combine_ln(
    ln_weights: &[f64],
    pl: &ContourFunction,
) -> Result<Vec<f64>, BeliefError> {
    if ln_weights.len() != pl.frame.size() {
        return Err(BeliefError::FrameMismatch(
            ln_weights.len(),
            pl.frame.size(),
        ));
    }
    let mut terms: Vec<f64> = ln_weights
        .iter()
        .zip(&pl.pl)
        .map(|(&lw, &v)| if v > 0.0 { lw + v.ln() } else { f64::NEG_INFINITY })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(BeliefError::TotalConflict(1.0));
    }
    let mut total = 0.0;
    for t in terms.iter_mut() {
        *t = (*t - max).exp();
        total += *t;
    }
    for t in terms.iter_mut() {
        *t /= total;
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(p: usize) -> Frame {
        Frame::new(p).unwrap()
    }

    fn set(labels: &[usize]) -> LabelSet {
        LabelSet::from_labels(labels)
    }

    #[test]
    fn bel_of_categorical_and_vacuous() {
        let m = MassFunction::categorical(frame(3), set(&[0])).unwrap();
        assert_eq!(m.bel(set(&[0])).unwrap(), 1.0);
        let v = MassFunction::vacuous(frame(3));
        for a in [set(&[0]), set(&[1, 2]), set(&[0, 2])] {
            assert_eq!(v.bel(a).unwrap(), 0.0);
            assert_eq!(v.pl(a).unwrap(), 1.0);
        }
    }

    #[test]
    fn bel_pl_on_nested_masses() {
        let m = MassFunction::new(frame(3), [(set(&[0]), 0.5), (set(&[0, 1]), 0.5)]).unwrap();
        assert_eq!(m.bel(set(&[0, 1])).unwrap(), 1.0);
        assert_eq!(m.pl(set(&[1])).unwrap(), 0.5);
        assert_eq!(m.contour().values(), &[1.0, 0.5, 0.0]);
    }

    #[test]
    fn bayesian_plausibility_is_probability() {
        let p = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let m = MassFunction::bayesian(&p);
        assert!((m.pl(set(&[1, 2])).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(contour_of(&m).values(), &[0.2, 0.3, 0.5]);
        assert_eq!(contour_of(&MassFunction::vacuous(frame(3))).values(), &[1.0; 3]);
    }

    #[test]
    fn empty_argument_is_rejected() {
        let m = MassFunction::vacuous(frame(2));
        assert_eq!(m.bel(LabelSet::EMPTY), Err(BeliefError::EmptySet));
        assert_eq!(m.pl(LabelSet::EMPTY), Err(BeliefError::EmptySet));
        assert!(matches!(
            m.pl(set(&[2])),
            Err(BeliefError::OutsideFrame { .. })
        ));
    }

    #[test]
    fn mass_validation() {
        assert!(matches!(
            MassFunction::new(frame(2), [(set(&[0]), 0.4)]),
            Err(BeliefError::NotNormalized(_))
        ));
        assert!(MassFunction::new(frame(2), [(LabelSet::EMPTY, 0.5), (set(&[0]), 0.5)]).is_err());
        assert!(MassFunction::new(frame(2), [(set(&[3]), 1.0)]).is_err());
        assert!(Frame::new(0).is_err());
        assert!(Frame::new(65).is_err());
        assert_eq!(Frame::new(64).unwrap().full(), LabelSet(u64::MAX));
    }

    #[test]
    fn vacuous_is_neutral() {
        let m1 = MassFunction::new(frame(3), [(set(&[0]), 0.3), (set(&[1, 2]), 0.7)]).unwrap();
        let (m, k) = dempster_combine(&m1, &MassFunction::vacuous(frame(3))).unwrap();
        assert_eq!(k, 0.0);
        assert_eq!(m, m1);
    }

    #[test]
    fn disjoint_categoricals_conflict_totally() {
        let a = MassFunction::categorical(frame(2), set(&[0])).unwrap();
        let b = MassFunction::categorical(frame(2), set(&[1])).unwrap();
        assert!(matches!(
            dempster_combine(&a, &b),
            Err(BeliefError::TotalConflict(_))
        ));
    }

    #[test]
    fn two_simple_supports_on_binary_frame() {
        // Intersection table: {1}∩{2}=∅ (0.30), {1}∩Θ={1} (0.30), Θ∩{2}={2} (0.20), Θ∩Θ=Θ (0.20).
        let m1 = MassFunction::new(frame(2), [(set(&[0]), 0.6), (set(&[0, 1]), 0.4)]).unwrap();
        let m2 = MassFunction::new(frame(2), [(set(&[1]), 0.5), (set(&[0, 1]), 0.5)]).unwrap();
        let (m, k) = dempster_combine(&m1, &m2).unwrap();
        assert!((k - 0.30).abs() < 1e-15);
        assert!((m.mass(set(&[0])) - 0.30 / 0.70).abs() < 1e-15);
        assert!((m.mass(set(&[1])) - 0.20 / 0.70).abs() < 1e-15);
        assert!((m.mass(set(&[0, 1])) - 0.20 / 0.70).abs() < 1e-15);
    }

    #[test]
    fn bayes_contour_special_cases() {
        let p1 = ProbabilityVector::uniform(3).unwrap();
        let (r, k) = bayes_contour_combine(&p1, &ContourFunction::vacuous(3).unwrap()).unwrap();
        assert_eq!(r, p1);
        assert!(k.abs() < 1e-15);

        let certain = ContourFunction::certain(3, 0).unwrap();
        let (r, k) = bayes_contour_combine(&p1, &certain).unwrap();
        assert_eq!(r.values(), &[1.0, 0.0, 0.0]);
        assert!((k - 2.0 / 3.0).abs() < 1e-15);

        let p = ProbabilityVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            bayes_contour_combine(&p, &certain),
            Err(BeliefError::TotalConflict(_))
        ));
    }

    #[test]
    fn log_space_combination_survives_underflow() {
        let pl = ContourFunction::new(vec![1.0, 0.5]).unwrap();
        let row = bayes_contour_combine_ln(&[-2000.0, -2001.0], &pl).unwrap();
        let a = 1.0;
        let b = (-1.0f64).exp() * 0.5;
        assert!((row[0] - a / (a + b)).abs() < 1e-14);
        assert!((row[1] - b / (a + b)).abs() < 1e-14);
        let zero = ContourFunction::certain(2, 0).unwrap();
        assert!(bayes_contour_combine_ln(&[f64::NEG_INFINITY, 0.0], &zero).is_err());
    }

    #[test]
    fn consonant_realization_has_requested_contour() {
        let pl = ContourFunction::new(vec![0.2, 1.0, 0.6, 0.6]).unwrap();
        let m = MassFunction::consonant_from_contour(&pl);
        let c = m.contour();
        for (a, b) in c.values().iter().zip(pl.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn contour_validation() {
        assert!(ContourFunction::new(vec![0.0, 0.0]).is_err());
        assert!(ContourFunction::new(vec![1.2, 0.0]).is_err());
        assert!(ContourFunction::new(vec![f64::NAN]).is_err());
        assert!(ContourFunction::certain(2, 2).is_err());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
    }
}
