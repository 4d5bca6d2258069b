use serde::Serialize;

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::propensity::{fit_multinomial_logit, PropensityFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrimReport {
    pub threshold: f64,
    /// Indices into the untrimmed cohort.
    pub removed_ids: Vec<usize>,
    pub removed_per_group: Vec<usize>,
    pub kept: usize,
    pub refit: bool,
}

#[derive(Debug, Clone)]
pub struct Trimmed {
    pub cohort: Cohort,
    pub fit: PropensityFit,
    pub report: TrimReport,
    /// Indices into the untrimmed cohort of the retained units.
    pub kept_ids: Vec<usize>,
}

/// Drops every unit whose smallest generalized propensity is below `threshold`.
///
/// With `refit` the propensity model is re-estimated on the retained units;
/// otherwise the original fitted probabilities are carried over.
pub fn trim(cohort: &Cohort, fit: &PropensityFit, threshold: f64, refit: bool) -> Result<Trimmed> {
    let levels = cohort.levels();
    if !(0.0..1.0 / levels as f64).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "trimming threshold {threshold} outside [0, 1/{levels})"
        )));
    }
    let mut kept_ids = Vec::new();
    let mut removed_ids = Vec::new();
    let mut removed_per_group = vec![0; levels];
    for i in 0..cohort.n() {
        let min_e = fit.probs.row(i).min();
        if min_e < threshold {
            removed_ids.push(i);
            removed_per_group[cohort.treatment()[i]] += 1;
        } else {
            kept_ids.push(i);
        }
    }
    let counts = cohort.group_counts();
    if let Some(g) = (0..levels).find(|&g| removed_per_group[g] == counts[g]) {
        return Err(Error::TrimmedGroup { group: g });
    }
    let trimmed = cohort.subset(&kept_ids)?;
    let new_fit = if refit && !removed_ids.is_empty() {
        fit_multinomial_logit(&trimmed)?
    } else {
        fit.subset(&kept_ids)
    };
    Ok(Trimmed {
        report: TrimReport {
            threshold,
            kept: kept_ids.len(),
            removed_ids,
            removed_per_group,
            refit,
        },
        cohort: trimmed,
        fit: new_fit,
        kept_ids,
    })
}
