use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cox::interval::confidence_intervals;
use crate::cox::risk::{evaluate_score_ordered, RiskSetOrder, SurvivalView};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Robust,
    Bootstrap,
    /// Inverse of the partial-likelihood information.
    Model,
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct CoxOptions {
    pub max_iterations: usize,
    /// Bound on the sup-norm of the score with weights rescaled to mean one.
    pub score_tolerance: f64,
    pub max_halvings: usize,
    pub divergence_bound: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            score_tolerance: 1e-8,
            max_halvings: 30,
            divergence_bound: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhrEstimate {
    pub tau: DVector<f64>,
    pub hr: DVector<f64>,
    pub cov_tau: Option<DMatrix<f64>>,
    pub se: Option<DVector<f64>>,
    pub ci_low: Option<DVector<f64>>,
    pub ci_high: Option<DVector<f64>>,
    pub variance_method: VarianceMethod,
    /// Partial-likelihood information at the estimate, on the caller's weight scale.
    pub information: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the score at the estimate, on the caller's weight scale.
    pub score_norm: f64,
    pub loglik: f64,
    pub reference_label: String,
    pub contrast_labels: Vec<String>,
}

impl MhrEstimate {
    pub fn contrasts(&self) -> usize {
        self.tau.len()
    }

    /// Attaches a covariance and the matching 95% intervals.
    pub fn with_covariance(mut self, cov: DMatrix<f64>, method: VarianceMethod) -> Self {
        self.set_covariance(cov, method, 0.95);
        self
    }

    pub fn set_covariance(&mut self, cov: DMatrix<f64>, method: VarianceMethod, level: f64) {
        let intervals = confidence_intervals(&self.tau, &cov, level);
        self.se = Some(DVector::from_iterator(
            cov.nrows(),
            (0..cov.nrows()).map(|k| cov[(k, k)].max(0.0).sqrt()),
        ));
        self.ci_low = Some(DVector::from_iterator(intervals.len(), intervals.iter().map(|c| c.low)));
        self.ci_high = Some(DVector::from_iterator(intervals.len(), intervals.iter().map(|c| c.high)));
        self.cov_tau = Some(cov);
        self.variance_method = method;
    }

    /// Covariance from the inverse information (classical Cox inference).
    pub fn model_covariance(&self) -> Result<DMatrix<f64>> {
        let mut inv = linalg::inverse(&self.information, "partial-likelihood information")?;
        linalg::symmetrize(&mut inv);
        Ok(inv)
    }
}

/// Point estimate of the log marginal hazard ratios for `cohort` under `weights`.
pub fn fit_mhr(cohort: &Cohort, weights: &[f64]) -> Result<MhrEstimate> {
    let mut est = fit_mhr_view(SurvivalView::from_cohort(cohort), weights, &CoxOptions::default())?;
    est.reference_label = cohort.treatment_labels()[0].clone();
    est.contrast_labels = cohort.treatment_labels()[1..].to_vec();
    Ok(est)
}

pub fn fit_mhr_view(data: SurvivalView<'_>, weights: &[f64], opts: &CoxOptions) -> Result<MhrEstimate> {
    let order = RiskSetOrder::new(data.time);
    fit_mhr_ordered(data, &order, weights, opts)
}

/// Newton-Raphson from `tau = 0` with step halving on the log-likelihood.
pub fn fit_mhr_ordered(
    data: SurvivalView<'_>,
    order: &RiskSetOrder,
    weights: &[f64],
    opts: &CoxOptions,
) -> Result<MhrEstimate> {
    let n = data.n();
    let j = data.contrasts();
    if weights.len() != n {
        return Err(Error::InvalidArgument("weights do not match cohort size".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let n_events = data.event.iter().filter(|&&d| d).count();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    // Mean-one weights keep the tolerance independent of the weight scale.
    let norm = n as f64 / total;
    let scaled: Vec<f64> = weights.iter().map(|w| w * norm).collect();
    let tol = opts.score_tolerance * (n_events as f64 / 1e4).max(1.0);

    let mut tau = DVector::zeros(j);
    let mut eval = evaluate_score_ordered(data, order, &scaled, &tau)?;
    let mut iterations = 0;
    // A vanishing score reached through large Newton steps signals a
    // likelihood that keeps increasing towards infinity.
    let mut last_step = 0.0;
    loop {
        let score_norm = linalg::max_abs(&eval.score);
        if score_norm <= tol && last_step <= 1e-4 {
            break;
        }
        // Large stacked data sets carry rounding noise in the score above
        // `tol`; a negligible step means the iterate no longer moves.
        if iterations > 0 && last_step <= 1e-8 {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                reason: "weighted partial likelihood".into(),
                iterations,
                gradient_norm: score_norm / norm,
                last_iterate: tau.iter().copied().collect(),
            });
        }
        iterations += 1;
        let step = match linalg::solve_spd(&eval.info, &eval.score, "partial-likelihood information") {
            Ok(s) => s,
            Err(e) if linalg::max_abs(&tau) > opts.divergence_bound / 2.0 => {
                log::debug!("{e}");
                return Err(Error::SurvivalSeparation {
                    magnitude: linalg::max_abs(&tau),
                });
            }
            Err(e) => return Err(e),
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &tau + &step * scale;
            let cand_eval = evaluate_score_ordered(data, order, &scaled, &cand)?;
            if cand_eval.loglik.is_finite()
                && cand_eval.loglik >= eval.loglik - 1e-10 * eval.loglik.abs().max(1.0)
            {
                accepted = Some((cand, cand_eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_eval)) = accepted else {
            // With millions of records the log-likelihood is flat to rounding
            // within a tiny Newton step; the current iterate is the optimum.
            if linalg::max_abs(&step) <= 1e-4 {
                break;
            }
            return Err(Error::NonConvergence {
                reason: "partial-likelihood line search failed".into(),
                iterations,
                gradient_norm: score_norm / norm,
                last_iterate: tau.iter().copied().collect(),
            });
        };
        last_step = linalg::max_abs(&step) * scale;
        tau = cand;
        eval = cand_eval;
        let magnitude = linalg::max_abs(&tau);
        if magnitude > opts.divergence_bound {
            return Err(Error::SurvivalSeparation { magnitude });
        }
    }
    if linalg::min_eigenvalue(&eval.info) <= 0.0 {
        return Err(Error::Singular {
            context: "partial-likelihood information at the estimate".into(),
            condition: linalg::condition_symmetric(&eval.info),
        });
    }
    let hr = tau.map(f64::exp);
    Ok(MhrEstimate {
        hr,
        cov_tau: None,
        se: None,
        ci_low: None,
        ci_high: None,
        variance_method: VarianceMethod::None,
        information: &eval.info / norm,
        converged: true,
        iterations,
        score_norm: linalg::max_abs(&eval.score) / norm,
        loglik: eval.loglik / norm,
        reference_label: "0".into(),
        contrast_labels: (1..data.levels).map(|k| k.to_string()).collect(),
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_unit_cohort() -> Cohort {
        Cohort::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true; 4],
            vec![1, 0, 0, 1],
            DMatrix::zeros(4, 0),
        )
        .unwrap()
    }

    /// Root of 1 = 2r/(r+1) + r/(r+2) by bisection on r.
    fn worked_root() -> f64 {
        let f = |r: f64| 1.0 - 2.0 * r / (r + 1.0) - r / (r + 2.0);
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).ln()
    }

    #[test]
    fn worked_example() {
        let est = fit_mhr(&four_unit_cohort(), &[1.0; 4]).unwrap();
        let root = worked_root();
        // r^2 + r - 1 = 0 after clearing denominators.
        assert!((root - ((5f64.sqrt() - 1.0) / 2.0).ln()).abs() < 1e-12);
        assert!((est.tau[0] - root).abs() < 1e-9, "{} vs {root}", est.tau[0]);
        assert!(est.score_norm <= 1e-8);
    }

    #[test]
    fn separation_detected() {
        let c = Cohort::new(vec![1.0, 2.0], vec![true, true], vec![1, 0], DMatrix::zeros(2, 0)).unwrap();
        let err = fit_mhr(&c, &[1.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("separation in survival ordering"), "{err}");
    }

    #[test]
    fn weight_scale_invariance() {
        let c = four_unit_cohort();
        let w = [0.7, 1.3, 2.0, 0.4];
        let a = fit_mhr(&c, &w).unwrap();
        let pow2: Vec<f64> = w.iter().map(|v| v * 4.0).collect();
        let b = fit_mhr(&c, &pow2).unwrap();
        assert_eq!(a.tau, b.tau);
        assert_eq!(a.iterations, b.iterations);
        let odd: Vec<f64> = w.iter().map(|v| v * 3.7).collect();
        let c2 = fit_mhr(&c, &odd).unwrap();
        assert!((a.tau[0] - c2.tau[0]).abs() < 1e-12);
        assert_eq!(a.iterations, c2.iterations);
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(fit_mhr(&four_unit_cohort(), &[1.0, -1.0, 1.0, 1.0]).is_err());
    }
}
