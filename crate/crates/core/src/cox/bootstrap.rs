//! Nonparametric bootstrap of the weighted estimator.
//!
//! Each replicate resamples units with replacement, refits the propensity
//! model and the marginal hazard ratios. Replicate `r` draws from its own
//! ChaCha stream so results do not depend on scheduling.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::cox::fit::fit_mhr;
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::linalg;
use crate::propensity::{compute_weights, fit_multinomial_logit, WeightScheme};
use crate::seeds::stream_rng;

/// Largest tolerated fraction of dropped replicates.
pub const MAX_DROP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub scheme: WeightScheme,
    pub cov_tau: DMatrix<f64>,
    pub draws: Vec<DVector<f64>>,
    pub requested: usize,
    pub dropped: usize,
    /// Drop reason -> count.
    pub drop_reasons: BTreeMap<String, usize>,
}

impl BootstrapResult {
    pub fn se(&self) -> DVector<f64> {
        self.cov_tau.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Resampled index vector for replicate `r`.
pub fn resample_indices(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, r as u64);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Applies `f` to `replicates` bootstrap resamples of `cohort`.
///
/// Resamples missing a treatment level or without events yield `Err`.
pub fn map_resamples<T, F>(cohort: &Cohort, replicates: usize, seed: u64, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(&Cohort) -> T + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let idx = resample_indices(cohort.n(), seed, r);
            let sample = cohort.subset(&idx)?;
            if sample.n_events() == 0 {
                return Err(Error::NoEvents);
            }
            Ok(f(&sample))
        })
        .collect()
}

fn reason(e: &Error) -> String {
    match e {
        Error::NoEvents => "resample contains no events".into(),
        Error::Validation { .. } => "resample lacks a treatment level".into(),
        Error::QuasiSeparation { .. } => "propensity quasi-separation".into(),
        Error::SurvivalSeparation { .. } => "separation in survival ordering".into(),
        Error::NonConvergence { .. } => "nonconvergence".into(),
        Error::Singular { .. } => "singular information".into(),
        Error::Positivity { .. } => "propensity at boundary".into(),
        other => other.to_string(),
    }
}

/// Collects per-replicate draws into a covariance, enforcing the drop limit.
pub fn summarize_draws(
    scheme: WeightScheme,
    outcomes: Vec<Result<DVector<f64>>>,
) -> Result<BootstrapResult> {
    let requested = outcomes.len();
    let mut draws = Vec::with_capacity(requested);
    let mut drop_reasons: BTreeMap<String, usize> = BTreeMap::new();
    for o in outcomes {
        match o {
            Ok(d) => draws.push(d),
            Err(e) => *drop_reasons.entry(reason(&e)).or_default() += 1,
        }
    }
    let dropped = requested - draws.len();
    if dropped as f64 > MAX_DROP_FRACTION * requested as f64 || draws.len() < 2 {
        return Err(Error::BootstrapUnstable {
            dropped,
            requested,
            reasons: drop_reasons
                .iter()
                .map(|(k, v)| format!("{k}: {v}"))
                .collect::<Vec<_>>()
                .join("; "),
        });
    }
    Ok(BootstrapResult {
        scheme,
        cov_tau: linalg::empirical_covariance(&draws),
        draws,
        requested,
        dropped,
        drop_reasons,
    })
}

/// Point estimate of `tau` on one resample under `scheme`.
pub fn refit_tau(sample: &Cohort, scheme: WeightScheme) -> Result<DVector<f64>> {
    let weights = if scheme.needs_propensity() {
        let ps = fit_multinomial_logit(sample)?;
        compute_weights(&ps, sample.treatment(), scheme)?.weights
    } else {
        vec![1.0; sample.n()]
    };
    Ok(fit_mhr(sample, &weights)?.tau)
}

pub fn bootstrap_covariance(
    cohort: &Cohort,
    scheme: WeightScheme,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    let outcomes = map_resamples(cohort, replicates, seed, |s| refit_tau(s, scheme))
        .into_iter()
        .map(|r| r.and_then(|x| x))
        .collect();
    summarize_draws(scheme, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_reproducible() {
        assert_eq!(resample_indices(50, 9, 3), resample_indices(50, 9, 3));
        assert_ne!(resample_indices(50, 9, 3), resample_indices(50, 9, 4));
    }

    #[test]
    fn too_few_replicates() {
        let c = Cohort::new(vec![1.0, 2.0], vec![true, true], vec![0, 1], DMatrix::zeros(2, 0)).unwrap();
        assert!(bootstrap_covariance(&c, WeightScheme::Unit, 1, 0).is_err());
    }

    #[test]
    fn unstable_when_most_replicates_fail() {
        let outcomes = (0..10)
            .map(|i| if i < 3 { Err(Error::NoEvents) } else { Ok(DVector::from_vec(vec![i as f64])) })
            .collect();
        let err = summarize_draws(WeightScheme::Ipw, outcomes).unwrap_err();
        assert!(err.to_string().contains("bootstrap unstable"));
        assert!(err.to_string().contains("no events"));
    }
}
