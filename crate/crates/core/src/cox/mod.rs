//! Weighted marginal Cox model for multiple treatments.
//!
//! The treatment effect is a vector of log hazard ratios `tau`, one per
//! non-reference level, estimated from the weighted partial likelihood.

mod bootstrap;
mod fit;
mod general;
mod interval;
mod risk;
mod sandwich;

pub use bootstrap::{
    bootstrap_covariance, map_resamples, refit_tau, resample_indices, summarize_draws,
    BootstrapResult, MAX_DROP_FRACTION,
};
pub use fit::{fit_mhr, fit_mhr_ordered, fit_mhr_view, CoxOptions, MhrEstimate, VarianceMethod};
pub use general::{fit_cox, CoxFit};
pub use interval::{confidence_intervals, normal_quantile, HazardRatioInterval};
pub use risk::{
    evaluate_score, evaluate_score_ordered, risk_processes, RiskProcesses, RiskSetOrder,
    ScoreEval, SurvivalView,
};
pub use sandwich::{
    sandwich_covariance, sandwich_covariance_with, score_residuals, stacked_estimating_function,
    CrossBlock, SandwichResult, StackedPieces,
};
