//! Weighted Cox regression on an arbitrary dense design.
//!
//! Used for the covariate-adjusted comparator; the marginal model goes
//! through the specialised indicator path in `risk`.

use nalgebra::{DMatrix, DVector};

use crate::cox::risk::RiskSetOrder;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub beta: DVector<f64>,
    pub information: DMatrix<f64>,
    /// Inverse information.
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

struct Eval {
    score: DVector<f64>,
    info: DMatrix<f64>,
    loglik: f64,
}

fn evaluate(
    order: &RiskSetOrder,
    event: &[bool],
    weights: &[f64],
    design: &DMatrix<f64>,
    beta: &DVector<f64>,
) -> Eval {
    let q = design.ncols();
    let eta = design * beta;
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(q);
    let mut s2 = DMatrix::zeros(q, q);
    let mut score = DVector::zeros(q);
    let mut info = DMatrix::zeros(q, q);
    let mut loglik = 0.0;
    for block in order.blocks() {
        for &i in block {
            let r = weights[i] * eta[i].exp();
            let x = design.row(i).transpose();
            s0 += r;
            s1.axpy(r, &x, 1.0);
            s2.ger(r, &x, &x, 1.0);
        }
        let mut w_events = 0.0;
        for &i in block {
            if event[i] {
                let w = weights[i];
                w_events += w;
                score.axpy(w, &design.row(i).transpose(), 1.0);
                loglik += w * eta[i];
            }
        }
        if w_events == 0.0 {
            continue;
        }
        let xbar = &s1 / s0;
        score.axpy(-w_events, &xbar, 1.0);
        info += (&s2 / s0 - &xbar * xbar.transpose()) * w_events;
        loglik -= w_events * s0.ln();
    }
    Eval { score, info, loglik }
}

/// Newton-Raphson fit with Breslow ties.
pub fn fit_cox(time: &[f64], event: &[bool], weights: &[f64], design: &DMatrix<f64>) -> Result<CoxFit> {
    let n = time.len();
    if event.len() != n || weights.len() != n || design.nrows() != n {
        return Err(Error::InvalidArgument("dimension mismatch in Cox fit".into()));
    }
    if !event.iter().any(|&d| d) {
        return Err(Error::NoEvents);
    }
    let order = RiskSetOrder::new(time);
    let q = design.ncols();
    let mut beta = DVector::zeros(q);
    let mut eval = evaluate(&order, event, weights, design, &beta);
    let mut last_step = 0.0;
    for iter in 0..50 {
        let gnorm = linalg::max_abs(&eval.score);
        if gnorm <= 1e-8 * (n as f64 / 1e4).max(1.0) && last_step <= 1e-4 {
            let mut covariance = linalg::inverse(&eval.info, "Cox information")?;
            linalg::symmetrize(&mut covariance);
            return Ok(CoxFit {
                beta,
                information: eval.info,
                covariance,
                loglik: eval.loglik,
                iterations: iter,
            });
        }
        let step = linalg::solve_spd(&eval.info, &eval.score, "Cox information")?;
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..=30 {
            let cand = &beta + &step * scale;
            let e = evaluate(&order, event, weights, design, &cand);
            if e.loglik.is_finite() && e.loglik >= eval.loglik - 1e-12 * eval.loglik.abs().max(1.0) {
                next = Some((cand, e));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, e)) = next else { break };
        last_step = linalg::max_abs(&step) * scale;
        beta = cand;
        eval = e;
        if linalg::max_abs(&beta) > 20.0 {
            return Err(Error::SurvivalSeparation {
                magnitude: linalg::max_abs(&beta),
            });
        }
    }
    Err(Error::NonConvergence {
        reason: "Cox regression".into(),
        iterations: 50,
        gradient_norm: linalg::max_abs(&eval.score),
        last_iterate: beta.iter().copied().collect(),
    })
}
