//! Synthetic binary-treatment cohort with a handful of near-violations of
//! positivity.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::cox::fit_mhr;
use crate::data::Cohort;
use crate::error::Result;
use crate::propensity::{compute_weights, fit_multinomial_logit, WeightScheme};
use crate::seeds::{stream_rng, streams};

pub const DEMO_SIZE: usize = 2000;

/// Covariate values of the planted treated units.
pub const PLANTED_X: [f64; 3] = [3.6, 3.8, 4.0];

/// `n` regular units with `logit P(Z = 1) = -2.5 x` and `x` clipped to
/// `[-2.5, 2.5]`, followed by three treated units beyond that range, censored
/// near the 90th percentile of observed follow-up. The effect is clear from
/// about `n = 2000`.
pub fn poor_overlap_cohort(n: usize, seed: u64) -> Result<Cohort> {
    let mut rng = stream_rng(seed, streams::COHORT);
    let total = n + PLANTED_X.len();
    let mut x = DMatrix::zeros(total, 1);
    let mut time = Vec::with_capacity(total);
    let mut event = Vec::with_capacity(total);
    let mut z = Vec::with_capacity(total);
    for i in 0..n {
        let xi = StandardNormal.sample(&mut rng);
        let xi: f64 = f64::clamp(xi, -2.5, 2.5);
        let p = 1.0 / (1.0 + (2.5 * xi).exp());
        let zi = usize::from(rng.gen::<f64>() < p);
        let rate = (0.5 * zi as f64 + 0.5 * xi).exp();
        let e: f64 = Exp1.sample(&mut rng);
        let c: f64 = Exp1.sample(&mut rng);
        let t = e / rate;
        let c = 3.0 * c;
        x[(i, 0)] = xi;
        time.push(t.min(c));
        event.push(t <= c);
        z.push(zi);
    }
    let mut sorted = time.clone();
    sorted.sort_by(f64::total_cmp);
    let late = sorted.get(sorted.len() * 9 / 10).copied().unwrap_or(1.0);
    for (k, &xi) in PLANTED_X.iter().enumerate() {
        x[(n + k, 0)] = xi;
        time.push(late * (1.0 + 0.01 * k as f64));
        event.push(false);
        z.push(1);
    }
    Cohort::with_labels(time, event, z, x, vec!["x1".into()], vec!["0".into(), "1".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapDemo {
    pub removed: Vec<usize>,
    pub ipw_hr_full: f64,
    pub ipw_hr_reduced: f64,
    pub ow_hr_full: f64,
    pub ow_hr_reduced: f64,
}

impl OverlapDemo {
    /// Fold change of the IPW hazard ratio, at least 1.
    pub fn ipw_fold_change(&self) -> f64 {
        let r = self.ipw_hr_full / self.ipw_hr_reduced;
        r.max(1.0 / r)
    }

    pub fn ow_relative_change(&self) -> f64 {
        (self.ow_hr_reduced / self.ow_hr_full - 1.0).abs()
    }
}

fn hazard_ratio(cohort: &Cohort, scheme: WeightScheme) -> Result<f64> {
    let ps = fit_multinomial_logit(cohort)?;
    let w = compute_weights(&ps, cohort.treatment(), scheme)?;
    Ok(fit_mhr(cohort, &w.weights)?.hr[0])
}

/// Hazard ratios before and after dropping the `k` units with the smallest
/// estimated propensity for any group, refitting the propensity model.
pub fn poor_overlap_demo(cohort: &Cohort, k: usize) -> Result<OverlapDemo> {
    let ps = fit_multinomial_logit(cohort)?;
    let mut extremity: Vec<(f64, usize)> = (0..cohort.n())
        .map(|i| (ps.probs.row(i).min(), i))
        .collect();
    extremity.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut removed: Vec<usize> = extremity.iter().take(k).map(|e| e.1).collect();
    removed.sort_unstable();
    let kept: Vec<usize> = (0..cohort.n()).filter(|i| removed.binary_search(i).is_err()).collect();
    let reduced = cohort.subset(&kept)?;
    Ok(OverlapDemo {
        removed,
        ipw_hr_full: hazard_ratio(cohort, WeightScheme::Ipw)?,
        ipw_hr_reduced: hazard_ratio(&reduced, WeightScheme::Ipw)?,
        ow_hr_full: hazard_ratio(cohort, WeightScheme::Overlap)?,
        ow_hr_reduced: hazard_ratio(&reduced, WeightScheme::Overlap)?,
    })
}
