//! Monte Carlo oracle for the true marginal hazard ratios.

use nalgebra::DVector;
use serde::Serialize;

use crate::cox::{fit_mhr_view, CoxOptions, SurvivalView};
use crate::error::{Error, Result};
use crate::propensity::WeightScheme;
use crate::seeds::{stream_rng, streams};
use crate::simulation::config::ScenarioConfig;
use crate::simulation::dgp::{gen_covariates, gen_outcomes, true_propensities};

pub const MIN_ESTIMAND_SIZE: usize = 1_000_000;
/// Administrative truncation quantile of the stacked potential times.
pub const TRUNCATION_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimandResult {
    pub scheme: WeightScheme,
    pub tau: Vec<f64>,
    pub hr: Vec<f64>,
    pub m: usize,
    pub seed: u64,
    pub truncation_time: f64,
}

impl EstimandResult {
    pub fn tau_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.tau)
    }
}

/// Upper `q` quantile by order statistic `ceil(q N)`.
pub(crate) fn order_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, x, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *x
}

/// Log marginal hazard ratios under `scheme` for the population implied by
/// `cfg` and the calibrated `intercepts`.
///
/// Every unit contributes one record per arm, tilted by `h(X)` from the true
/// propensities and truncated at the 99.9th percentile of all stacked times.
pub fn true_estimand(
    cfg: &ScenarioConfig,
    intercepts: &[f64],
    scheme: WeightScheme,
    m: usize,
    seed: u64,
) -> Result<EstimandResult> {
    if m < MIN_ESTIMAND_SIZE {
        return Err(Error::InvalidArgument(format!(
            "M too small: {m} < {MIN_ESTIMAND_SIZE}"
        )));
    }
    if let WeightScheme::Att(j) = scheme {
        if j >= cfg.levels() {
            return Err(Error::InvalidArgument(format!("att level {j} out of range")));
        }
    }
    let levels = cfg.levels();
    let mut rng = stream_rng(seed, streams::ESTIMAND);
    let x = gen_covariates(m, &mut rng);
    let probs = true_propensities(cfg, &x, intercepts);
    let t = gen_outcomes(&x, &cfg.theta, &cfg.beta, cfg.weibull_shape, cfg.weibull_scale, &mut rng);
    drop(x);

    let total = m * levels;
    let mut time = Vec::with_capacity(total);
    let mut group = Vec::with_capacity(total);
    let mut weight = Vec::with_capacity(total);
    let mut row = vec![0.0; levels];
    for i in 0..m {
        for (k, r) in row.iter_mut().enumerate() {
            *r = probs[(i, k)];
        }
        let h = scheme.tilt(&row);
        for k in 0..levels {
            time.push(t[(i, k)]);
            group.push(k);
            weight.push(h);
        }
    }
    drop(t);
    drop(probs);

    let t0 = order_quantile(&time, TRUNCATION_QUANTILE);
    let event: Vec<bool> = time.iter().map(|&s| s <= t0).collect();
    for s in time.iter_mut() {
        *s = s.min(t0);
    }
    let view = SurvivalView {
        time: &time,
        event: &event,
        group: &group,
        levels,
    };
    let est = fit_mhr_view(view, &weight, &CoxOptions::default())?;
    Ok(EstimandResult {
        scheme,
        tau: est.tau.iter().copied().collect(),
        hr: est.hr.iter().copied().collect(),
        m,
        seed,
        truncation_time: t0,
    })
}
