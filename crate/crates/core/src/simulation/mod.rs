//! Simulation designs, calibration, true-estimand oracle and the replicate
//! study runner.

mod calibrate;
mod config;
mod demo;
pub mod dgp;
mod estimand;
mod rates;
mod study;

pub use calibrate::{
    calibrate, calibrate_censoring, calibrate_censoring_with_size, calibrate_intercepts,
    calibrate_intercepts_with_size, censoring_fraction, Calibration, CENSORING_TOLERANCE,
    PREVALENCE_TOLERANCE,
};
pub use config::{ScenarioConfig, Setting};
pub use demo::{poor_overlap_cohort, poor_overlap_demo, OverlapDemo, DEMO_SIZE, PLANTED_X};
pub use dgp::{
    gen_covariates, gen_outcomes, gen_treatment_factorial, gen_treatment_multi3,
    generate_replicate, true_propensities, ReplicateData,
};
pub use estimand::{true_estimand, EstimandResult, MIN_ESTIMAND_SIZE, TRUNCATION_QUANTILE};
pub use rates::{event_rates, EventRate};
pub use study::{
    analyze_cohort, prepare, run_replicate, run_study, Estimands, Method, MethodDraw,
    MethodSummary, StudyReport, MAX_FAILURE_FRACTION, METHODS,
};
