//! Pairwise standardized mean differences.

use serde::Serialize;

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::propensity::{WeightScheme, WeightSet};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMoments {
    pub covariate: String,
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub weighted_mean: f64,
    pub weighted_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmdEntry {
    pub covariate: String,
    pub group_a: String,
    pub group_b: String,
    pub unweighted: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub scheme: WeightScheme,
    pub entries: Vec<SmdEntry>,
    pub moments: Vec<GroupMoments>,
}

impl BalanceReport {
    pub fn max_abs_weighted(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, e| m.max(e.weighted.abs()))
    }

    pub fn max_abs_unweighted(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, e| m.max(e.unweighted.abs()))
    }
}

/// Weighted mean and variance of `x` over one group.
///
/// Weights are rescaled to sum to the group size before applying the
/// frequency-weight denominator, so unit weights give the sample variance.
pub fn weighted_moments(x: &[f64], w: &[f64]) -> (f64, f64) {
    let n = x.len();
    let total: f64 = w.iter().sum();
    if n == 0 || total <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = x.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>();
    (mean, ss / total * n as f64 / (n as f64 - 1.0))
}

/// `(m_a - m_b) / sqrt((s_a^2 + s_b^2) / 2)`; degenerate scales give 0 for
/// equal means and a signed infinity otherwise.
pub fn smd(mean_a: f64, var_a: f64, mean_b: f64, var_b: f64) -> f64 {
    let diff = mean_a - mean_b;
    let scale = ((var_a + var_b) / 2.0).sqrt();
    if scale > 0.0 {
        diff / scale
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

pub fn balance_table(cohort: &Cohort, weights: &WeightSet) -> Result<BalanceReport> {
    if weights.len() != cohort.n() {
        return Err(Error::InvalidArgument("weights do not match cohort size".into()));
    }
    if weights.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let levels = cohort.levels();
    let labels = cohort.treatment_labels();
    let mut moments = Vec::new();
    let mut entries = Vec::new();
    for (k, name) in cohort.covariate_names().iter().enumerate() {
        let column = cohort.covariates().column(k);
        // (mean, var, wmean, wvar) per group
        let mut stats = Vec::with_capacity(levels);
        for g in 0..levels {
            let idx: Vec<usize> = (0..cohort.n()).filter(|&i| cohort.treatment()[i] == g).collect();
            let x: Vec<f64> = idx.iter().map(|&i| column[i]).collect();
            let w: Vec<f64> = idx.iter().map(|&i| weights.weights[i]).collect();
            let (m, v) = weighted_moments(&x, &vec![1.0; x.len()]);
            let (wm, wv) = weighted_moments(&x, &w);
            moments.push(GroupMoments {
                covariate: name.clone(),
                group: labels[g].clone(),
                n: x.len(),
                mean: m,
                variance: v,
                weighted_mean: wm,
                weighted_variance: wv,
            });
            stats.push((m, v, wm, wv));
        }
        for a in 0..levels {
            for b in (a + 1)..levels {
                let (ma, va, wma, wva) = stats[a];
                let (mb, vb, wmb, wvb) = stats[b];
                entries.push(SmdEntry {
                    covariate: name.clone(),
                    group_a: labels[a].clone(),
                    group_b: labels[b].clone(),
                    unweighted: smd(ma, va, mb, vb),
                    weighted: smd(wma, wva, wmb, wvb),
                });
            }
        }
    }
    Ok(BalanceReport {
        scheme: weights.scheme,
        entries,
        moments,
    })
}
