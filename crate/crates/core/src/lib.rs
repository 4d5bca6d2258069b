//! Weighted marginal Cox models for multiple treatments.
//!
//! Propensity scores come from a multinomial logit; balancing weights
//! (inverse probability, overlap, treated-group) feed a weighted partial
//! likelihood whose coefficients are log marginal hazard ratios against a
//! reference level. Variances come from a stacked sandwich that accounts for
//! propensity estimation, or from the bootstrap.

pub mod cox;
pub mod data;
pub mod error;
pub mod km;
pub mod linalg;
pub mod propensity;
pub mod seeds;
pub mod simulation;

pub use cox::{fit_mhr, sandwich_covariance, MhrEstimate, VarianceMethod};
pub use data::{validate_cohort, Cohort, FactorialCoding, RawRecord, ValidationOptions};
pub use error::{Error, Result};
pub use km::{weighted_km, weighted_km_all, KmCurve};
pub use propensity::{
    balance_table, compute_weights, fit_multinomial_logit, trim, BalanceReport, PropensityFit,
    WeightScheme, WeightSet,
};
pub use simulation::{ScenarioConfig, Setting, StudyReport};
