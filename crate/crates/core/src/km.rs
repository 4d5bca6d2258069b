//! Weighted Kaplan-Meier curves per treatment group.

use serde::Serialize;

use crate::data::Cohort;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmCurve {
    pub group: usize,
    pub label: String,
    /// Distinct event times within the group, increasing.
    pub event_times: Vec<f64>,
    pub survival: Vec<f64>,
    pub weighted_events: Vec<f64>,
    pub weighted_at_risk: Vec<f64>,
}

impl KmCurve {
    /// Step-function value at `t` (1 before the first event).
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.event_times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }
}

/// Product-limit estimate for `group` using only that group's units.
pub fn weighted_km(cohort: &Cohort, weights: &[f64], group: usize) -> Result<KmCurve> {
    if weights.len() != cohort.n() {
        return Err(Error::InvalidArgument("weights do not match cohort size".into()));
    }
    if group >= cohort.levels() {
        return Err(Error::InvalidArgument(format!("group {group} out of range")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let mut units: Vec<(f64, bool, f64)> = (0..cohort.n())
        .filter(|&i| cohort.treatment()[i] == group)
        .map(|i| (cohort.time()[i], cohort.event()[i], weights[i]))
        .collect();
    let total: f64 = units.iter().map(|u| u.2).sum();
    if units.is_empty() || total <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "group {} has zero total weight",
            cohort.treatment_labels()[group]
        )));
    }
    units.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut curve = KmCurve {
        group,
        label: cohort.treatment_labels()[group].clone(),
        event_times: Vec::new(),
        survival: Vec::new(),
        weighted_events: Vec::new(),
        weighted_at_risk: Vec::new(),
    };
    // Accumulated from the latest time backwards so that at-risk sums match
    // an independent per-time summation order.
    let mut at_risk_suffix = vec![0.0; units.len() + 1];
    for k in (0..units.len()).rev() {
        at_risk_suffix[k] = at_risk_suffix[k + 1] + units[k].2;
    }
    let mut s = 1.0;
    let mut k = 0;
    while k < units.len() {
        let t = units[k].0;
        let mut end = k;
        let mut d = 0.0;
        let mut any_event = false;
        while end < units.len() && units[end].0 == t {
            if units[end].1 {
                d += units[end].2;
                any_event = true;
            }
            end += 1;
        }
        if any_event {
            let r = at_risk_suffix[k];
            s *= 1.0 - d / r;
            curve.event_times.push(t);
            curve.survival.push(s);
            curve.weighted_events.push(d);
            curve.weighted_at_risk.push(r);
        }
        k = end;
    }
    Ok(curve)
}

/// Curves for every treatment group.
pub fn weighted_km_all(cohort: &Cohort, weights: &[f64]) -> Result<Vec<KmCurve>> {
    (0..cohort.levels()).map(|g| weighted_km(cohort, weights, g)).collect()
}

/// Pointwise `1 - S(t)`.
pub fn cumulative_risk(curve: &KmCurve) -> Vec<f64> {
    curve.survival.iter().map(|s| 1.0 - s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn cohort() -> Cohort {
        Cohort::new(
            vec![1.0, 1.5, 2.0, 0.5],
            vec![true, false, true, true],
            vec![0, 0, 0, 1],
            DMatrix::zeros(4, 0),
        )
        .unwrap()
    }

    #[test]
    fn classical_arithmetic() {
        let c = weighted_km(&cohort(), &[1.0; 4], 0).unwrap();
        assert_eq!(c.event_times, vec![1.0, 2.0]);
        assert!((c.survival[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.survival[1], 0.0);
        assert_eq!(c.survival_at(0.5), 1.0);
        assert_eq!(c.survival_at(1.7), c.survival[0]);
    }

    #[test]
    fn constant_weights_cancel() {
        let a = weighted_km(&cohort(), &[1.0; 4], 0).unwrap();
        let b = weighted_km(&cohort(), &[2.5; 4], 0).unwrap();
        assert_eq!(a.survival, b.survival);
    }

    #[test]
    fn cumulative_risk_complement() {
        let mut c = weighted_km(&cohort(), &[1.0; 4], 0).unwrap();
        c.survival = vec![1.0, 0.5, 0.25];
        assert_eq!(cumulative_risk(&c), vec![0.0, 0.5, 0.75]);
        c.survival.clear();
        assert!(cumulative_risk(&c).is_empty());
    }

    #[test]
    fn zero_weight_group_is_error() {
        assert!(weighted_km(&cohort(), &[1.0, 1.0, 1.0, 0.0], 1).is_err());
    }
}
