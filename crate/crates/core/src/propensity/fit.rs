//! Multinomial logistic generalized propensity score model.
//!
//! Parameters are stored as a `J x (p+1)` matrix `gamma`; row `j` holds the
//! log-odds of level `j+1` against the reference level 0, first column the
//! intercept. Flattened parameter vectors use the Kronecker order
//! `theta[j * (p+1) + k] = gamma[(j, k)]`, matching `(D_i - e_i) (x) x_i`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct LogitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub max_halvings: usize,
    pub separation_bound: f64,
    pub ridge_condition: f64,
    pub ridge: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            max_halvings: 30,
            separation_bound: 30.0,
            ridge_condition: 1e12,
            ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropensityFit {
    /// `J x (p+1)` coefficients.
    #[serde(skip)]
    pub gamma: DMatrix<f64>,
    /// `n x (J+1)` fitted probabilities.
    #[serde(skip)]
    pub probs: DMatrix<f64>,
    /// `n x (p+1)` design with a leading intercept column.
    #[serde(skip)]
    pub design: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub log_likelihood: f64,
    pub ridge_applied: bool,
}

impl PropensityFit {
    pub fn contrasts(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.gamma.len()
    }

    /// Row subset of probabilities and design, keeping `gamma`.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)]);
        Self {
            probs: pick(&self.probs),
            design: pick(&self.design),
            ..self.clone()
        }
    }
}

/// Prepends an intercept column to the covariates.
pub fn design_matrix(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = covariates.nrows();
    DMatrix::from_fn(n, covariates.ncols() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            covariates[(r, c - 1)]
        }
    })
}

pub fn gamma_to_vec(gamma: &DMatrix<f64>) -> DVector<f64> {
    let (j, q) = gamma.shape();
    DVector::from_fn(j * q, |i, _| gamma[(i / q, i % q)])
}

pub fn vec_to_gamma(theta: &DVector<f64>, contrasts: usize) -> DMatrix<f64> {
    let q = theta.len() / contrasts;
    DMatrix::from_fn(contrasts, q, |j, k| theta[j * q + k])
}

/// Softmax probabilities `n x (J+1)` with the reference logit fixed at 0.
pub fn probabilities(design: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = design.nrows();
    let contrasts = gamma.nrows();
    let mut out = DMatrix::zeros(n, contrasts + 1);
    let mut eta = vec![0.0; contrasts + 1];
    for i in 0..n {
        let x = design.row(i);
        let mut top = 0.0f64;
        for j in 0..contrasts {
            eta[j + 1] = gamma.row(j).dot(&x);
            top = top.max(eta[j + 1]);
        }
        eta[0] = 0.0;
        let mut total = 0.0;
        for e in eta.iter_mut() {
            *e = (*e - top).exp();
            total += *e;
        }
        for (j, e) in eta.iter().enumerate() {
            out[(i, j)] = e / total;
        }
    }
    out
}

/// Multinomial log-likelihood `sum_i log e_{i, Z_i}`.
pub fn log_likelihood(design: &DMatrix<f64>, treatment: &[usize], gamma: &DMatrix<f64>) -> f64 {
    let contrasts = gamma.nrows();
    let mut ll = 0.0;
    let mut eta = vec![0.0; contrasts + 1];
    for (i, &z) in treatment.iter().enumerate() {
        let x = design.row(i);
        let mut top = 0.0f64;
        for j in 0..contrasts {
            eta[j + 1] = gamma.row(j).dot(&x);
            top = top.max(eta[j + 1]);
        }
        eta[0] = 0.0;
        let lse = top + eta.iter().map(|e| (e - top).exp()).sum::<f64>().ln();
        ll += eta[z] - lse;
    }
    ll
}

/// Per-unit score contributions `pi_i = (D_i - e_i) (x) x_i`, one row per unit.
pub fn score_contributions(
    design: &DMatrix<f64>,
    treatment: &[usize],
    probs: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (n, q) = design.shape();
    let contrasts = probs.ncols() - 1;
    let mut out = DMatrix::zeros(n, contrasts * q);
    for i in 0..n {
        for j in 0..contrasts {
            let resid = f64::from(u8::from(treatment[i] == j + 1)) - probs[(i, j + 1)];
            for k in 0..q {
                out[(i, j * q + k)] = resid * design[(i, k)];
            }
        }
    }
    out
}

pub fn score(design: &DMatrix<f64>, treatment: &[usize], probs: &DMatrix<f64>) -> DVector<f64> {
    let (n, q) = design.shape();
    let contrasts = probs.ncols() - 1;
    let mut out = DVector::zeros(contrasts * q);
    for i in 0..n {
        for j in 0..contrasts {
            let resid = f64::from(u8::from(treatment[i] == j + 1)) - probs[(i, j + 1)];
            for k in 0..q {
                out[j * q + k] += resid * design[(i, k)];
            }
        }
    }
    out
}

/// Observed (= expected) information `sum_i (diag(e_i) - e_i e_i') (x) x_i x_i'`.
pub fn fisher_information(design: &DMatrix<f64>, probs: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q) = design.shape();
    let contrasts = probs.ncols() - 1;
    let dim = contrasts * q;
    let mut info = DMatrix::zeros(dim, dim);
    let mut outer = vec![0.0; q * q];
    for i in 0..n {
        for a in 0..q {
            for b in 0..q {
                outer[a * q + b] = design[(i, a)] * design[(i, b)];
            }
        }
        for ja in 0..contrasts {
            let ea = probs[(i, ja + 1)];
            for jb in 0..contrasts {
                let eb = probs[(i, jb + 1)];
                let c = if ja == jb { ea - ea * eb } else { -ea * eb };
                for a in 0..q {
                    for b in 0..q {
                        info[(ja * q + a, jb * q + b)] += c * outer[a * q + b];
                    }
                }
            }
        }
    }
    info
}

/// Maximum-likelihood fit of the propensity model for `cohort`.
pub fn fit_multinomial_logit(cohort: &Cohort) -> Result<PropensityFit> {
    fit_multinomial_logit_with(cohort, &LogitOptions::default())
}

pub fn fit_multinomial_logit_with(cohort: &Cohort, opts: &LogitOptions) -> Result<PropensityFit> {
    let design = design_matrix(cohort.covariates());
    fit_design(design, cohort.treatment(), cohort.levels(), opts)
}

/// Newton-Raphson with step halving from `gamma = 0`.
pub fn fit_design(
    design: DMatrix<f64>,
    treatment: &[usize],
    levels: usize,
    opts: &LogitOptions,
) -> Result<PropensityFit> {
    let contrasts = levels - 1;
    let q = design.ncols();
    let mut gamma = DMatrix::zeros(contrasts, q);
    let mut probs = probabilities(&design, &gamma);
    let mut ll = log_likelihood(&design, treatment, &gamma);
    let mut ridge_applied = false;
    let mut grad = score(&design, treatment, &probs);
    let mut grad_norm = linalg::max_abs(&grad);
    // Under separation the gradient decays while the iterates keep moving.
    let mut last_step = 0.0;

    for iter in 0..opts.max_iterations {
        if grad_norm <= opts.gradient_tolerance && last_step <= 1e-4 {
            return Ok(PropensityFit {
                gamma,
                probs,
                design,
                converged: true,
                iterations: iter,
                final_gradient_norm: grad_norm,
                log_likelihood: ll,
                ridge_applied,
            });
        }
        let mut info = fisher_information(&design, &probs);
        if linalg::condition_symmetric(&info) > opts.ridge_condition {
            log::warn!("propensity information nearly singular; adding ridge {}", opts.ridge);
            for d in 0..info.nrows() {
                info[(d, d)] += opts.ridge;
            }
            ridge_applied = true;
        }
        let step = linalg::solve_spd(&info, &grad, "propensity information")?;
        let theta = gamma_to_vec(&gamma);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = vec_to_gamma(&(&theta + &step * scale), contrasts);
            let cand_ll = log_likelihood(&design, treatment, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            return Err(Error::NonConvergence {
                reason: "propensity line search failed".into(),
                iterations: iter + 1,
                gradient_norm: grad_norm,
                last_iterate: theta.iter().copied().collect(),
            });
        };
        last_step = linalg::max_abs(&step) * scale;
        gamma = cand;
        ll = cand_ll;
        let magnitude = gamma.amax();
        if magnitude > opts.separation_bound {
            return Err(Error::QuasiSeparation {
                magnitude,
                bound: opts.separation_bound,
            });
        }
        probs = probabilities(&design, &gamma);
        grad = score(&design, treatment, &probs);
        grad_norm = linalg::max_abs(&grad);
    }
    if grad_norm <= opts.gradient_tolerance && last_step <= 1e-4 {
        return Ok(PropensityFit {
            gamma,
            probs,
            design,
            converged: true,
            iterations: opts.max_iterations,
            final_gradient_norm: grad_norm,
            log_likelihood: ll,
            ridge_applied,
        });
    }
    Err(Error::NonConvergence {
        reason: "propensity model".into(),
        iterations: opts.max_iterations,
        gradient_norm: grad_norm,
        last_iterate: gamma_to_vec(&gamma).iter().copied().collect(),
    })
}
