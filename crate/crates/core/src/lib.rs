//! Maximum-likelihood estimation of finite Rayleigh mixtures from
//! progressively Type-II censored life tests, where prior knowledge about
//! each unit's component is given as a belief-function plausibility.
//!
//! - [`belief`]: mass functions, Bel/Pl, Dempster's rule, Bayesian ⊕ contour.
//! - [`lifetime`]: Rayleigh components and mixtures.
//! - [`censoring`]: censoring plans, life-test replay, censored likelihood.
//! - [`e2m`]: the evidential EM estimator.
//! - [`monte_carlo`]: label corruption, replications and bias sweeps.
//! - [`io`]: CSV formats.

pub mod belief;
pub mod censoring;
pub mod e2m;
pub mod io;
pub mod lifetime;
pub mod math;
pub mod monte_carlo;

pub use belief::{ContourFunction, Frame, LabelSet, MassFunction, ProbabilityVector};
pub use censoring::{CensoredDataset, CensoringScheme, Record, Status};
pub use e2m::{E2mConfig, E2mError, E2mTrace, LabelMode, Posterior, SoftLabeledDataset};
pub use lifetime::{LifetimeDistribution, MixtureParams, Rayleigh};
pub use monte_carlo::{ExperimentConfig, RabiasReport, SweepSpec, SweepVariable};
