//! Robust sandwich covariance for the stacked propensity / partial-likelihood
//! estimating equations.
//!
//! The joint parameter is `(tau, gamma)` with `gamma` flattened in Kronecker
//! order. `A` is the negative mean Jacobian of the stacked estimating
//! function, `B` the mean outer product of the per-unit contributions in
//! which the partial-likelihood part is replaced by its i.i.d. representation
//! `Psi_i`. The covariance is `A^-1 B A^-T / n`.

use nalgebra::{DMatrix, DVector};

use crate::cox::risk::{evaluate_score_ordered, RiskSetOrder, SurvivalView};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::linalg;
use crate::propensity::{
    fisher_information, gamma_to_vec, probabilities, score as logit_score, score_contributions,
    vec_to_gamma, weights_from_probs, PropensityFit, WeightScheme,
};

/// How the `tau`-`gamma` cross block of `A` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossBlock {
    /// Central differences of the summed partial-likelihood score in `gamma`.
    #[default]
    FiniteDifference,
    /// Closed-form derivative through the weights and the risk-set averages.
    Analytic,
}

#[derive(Debug, Clone)]
pub struct StackedPieces {
    /// `n x J` score contributions `w_i delta_i (D_i - Dbar(Y_i))`.
    pub psi: DMatrix<f64>,
    /// `n x J` i.i.d. representation including the risk-set correction.
    pub big_psi: DMatrix<f64>,
    /// `n x P` propensity score contributions (empty when weights are fixed).
    pub pi: DMatrix<f64>,
    pub a_tau_tau: DMatrix<f64>,
    pub a_tau_gamma: DMatrix<f64>,
    pub a_gamma_gamma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SandwichResult {
    pub cov_joint: DMatrix<f64>,
    pub cov_tau: DMatrix<f64>,
    /// Variance treating the weights as known (no propensity correction).
    pub cov_tau_fixed_weights: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    pub pieces: StackedPieces,
}

struct BlockStats {
    s0: f64,
    dbar: Vec<f64>,
    event_weight: f64,
}

fn block_stats(
    data: SurvivalView<'_>,
    blocks: &[&[usize]],
    weights: &[f64],
    rel: &[f64],
) -> Vec<BlockStats> {
    let j = data.contrasts();
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; j];
    let mut out = Vec::with_capacity(blocks.len());
    for block in blocks {
        let mut event_weight = 0.0;
        for &i in *block {
            let g = data.group[i];
            let r = weights[i] * rel[g];
            s0 += r;
            if g > 0 {
                s1[g - 1] += r;
            }
            if data.event[i] {
                event_weight += weights[i];
            }
        }
        let dbar = if s0 > 0.0 {
            s1.iter().map(|v| v / s0).collect()
        } else {
            vec![0.0; j]
        };
        out.push(BlockStats {
            s0,
            dbar,
            event_weight,
        });
    }
    out
}

/// Per-unit `psi_i` and `Psi_i` (rows) at `tau` with fixed weights.
///
/// The correction term sums, over event times `Y_j <= Y_i`, the jump of the
/// weighted cumulative event process divided by the unnormalized weighted
/// risk-set total.
pub fn score_residuals(
    data: SurvivalView<'_>,
    weights: &[f64],
    tau: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let order = RiskSetOrder::new(data.time);
    let blocks: Vec<&[usize]> = order.blocks().collect();
    let j = data.contrasts();
    let mut rel = vec![1.0; data.levels];
    for k in 0..j {
        rel[k + 1] = tau[k].exp();
    }
    let stats = block_stats(data, &blocks, weights, &rel);
    let n = data.n();
    let mut psi = DMatrix::zeros(n, j);
    let mut big_psi = DMatrix::zeros(n, j);
    let mut cum_a = 0.0;
    let mut cum_b = vec![0.0; j];
    // ascending time
    for (block, st) in blocks.iter().zip(&stats).rev() {
        if st.event_weight > 0.0 {
            cum_a += st.event_weight / st.s0;
            for k in 0..j {
                cum_b[k] += st.event_weight * st.dbar[k] / st.s0;
            }
        }
        for &i in *block {
            let g = data.group[i];
            let w = weights[i];
            let r = rel[g];
            for k in 0..j {
                let d = f64::from(u8::from(g == k + 1));
                let own = if data.event[i] { w * (d - st.dbar[k]) } else { 0.0 };
                psi[(i, k)] = own;
                big_psi[(i, k)] = own - w * r * (d * cum_a - cum_b[k]);
            }
        }
    }
    (psi, big_psi)
}

/// Summed stacked estimating function `sum_i (psi_i(tau, gamma), pi_i(gamma))`.
///
/// Weights are recomputed from `gamma` under `scheme`.
pub fn stacked_estimating_function(
    data: SurvivalView<'_>,
    design: &DMatrix<f64>,
    scheme: WeightScheme,
    tau: &DVector<f64>,
    gamma: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let probs = probabilities(design, gamma);
    let w = weights_from_probs(&probs, data.group, scheme)?;
    let order = RiskSetOrder::new(data.time);
    let s = evaluate_score_ordered(data, &order, &w.weights, tau)?.score;
    let p = logit_score(design, data.group, &probs);
    let mut out = DVector::zeros(s.len() + p.len());
    out.rows_mut(0, s.len()).copy_from(&s);
    out.rows_mut(s.len(), p.len()).copy_from(&p);
    Ok(out)
}

/// `-d/dgamma sum_i psi_i` by central differences, holding `tau` fixed.
fn cross_block_fd(
    data: SurvivalView<'_>,
    order: &RiskSetOrder,
    fit: &PropensityFit,
    scheme: WeightScheme,
    tau: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let j = data.contrasts();
    let theta = gamma_to_vec(&fit.gamma);
    let mut out = DMatrix::zeros(j, theta.len());
    for a in 0..theta.len() {
        let h = 1e-6 * theta[a].abs().max(1.0);
        let eval_at = |delta: f64| -> Result<DVector<f64>> {
            let mut th = theta.clone();
            th[a] += delta;
            let probs = probabilities(&fit.design, &vec_to_gamma(&th, fit.contrasts()));
            let w = weights_from_probs(&probs, data.group, scheme)?;
            Ok(evaluate_score_ordered(data, order, &w.weights, tau)?.score)
        };
        let col = (eval_at(h)? - eval_at(-h)?) / (2.0 * h);
        out.set_column(a, &(-col));
    }
    Ok(out)
}

/// `-d/dgamma sum_i psi_i` in closed form.
fn cross_block_analytic(
    data: SurvivalView<'_>,
    order: &RiskSetOrder,
    fit: &PropensityFit,
    scheme: WeightScheme,
    weights: &[f64],
    tau: &DVector<f64>,
) -> DMatrix<f64> {
    let j = data.contrasts();
    let q = fit.design.ncols();
    let dim = j * q;
    let levels = data.levels;
    let mut rel = vec![1.0; levels];
    for k in 0..j {
        rel[k + 1] = tau[k].exp();
    }
    // dlog w_l / d gamma_{m, k} = g[l][m] * x_{l k}
    let n = data.n();
    let mut g = vec![0.0; n * j];
    let mut e = vec![0.0; levels];
    for l in 0..n {
        for (c, ev) in e.iter_mut().enumerate() {
            *ev = fit.probs[(l, c)];
        }
        for m in 0..j {
            g[l * j + m] = scheme.dlog_weight(&e, data.group[l], m + 1);
        }
    }
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; j];
    // U[a] = sum_R dw_l r_l, T[a * j + k] = sum_R dw_l r_l D_lk
    let mut u = vec![0.0; dim];
    let mut t = vec![0.0; dim * j];
    let mut deriv = DMatrix::zeros(j, dim);
    let mut dbar = vec![0.0; j];
    for block in order.blocks() {
        for &l in block {
            let z = data.group[l];
            let wr = weights[l] * rel[z];
            s0 += wr;
            if z > 0 {
                s1[z - 1] += wr;
            }
            for m in 0..j {
                let gm = g[l * j + m] * wr;
                for k in 0..q {
                    let a = m * q + k;
                    let v = gm * fit.design[(l, k)];
                    u[a] += v;
                    if z > 0 {
                        t[a * j + (z - 1)] += v;
                    }
                }
            }
        }
        if !block.iter().any(|&i| data.event[i]) {
            continue;
        }
        for k in 0..j {
            dbar[k] = s1[k] / s0;
        }
        for &i in block {
            if !data.event[i] {
                continue;
            }
            let w = weights[i];
            let z = data.group[i];
            for m in 0..j {
                for kk in 0..q {
                    let a = m * q + kk;
                    let dw = w * g[i * j + m] * fit.design[(i, kk)];
                    for c in 0..j {
                        let d = f64::from(u8::from(z == c + 1));
                        let ddbar = (t[a * j + c] - dbar[c] * u[a]) / s0;
                        deriv[(c, a)] += dw * (d - dbar[c]) - w * ddbar;
                    }
                }
            }
        }
    }
    -deriv
}

pub fn sandwich_covariance(
    cohort: &Cohort,
    fit: Option<&PropensityFit>,
    scheme: WeightScheme,
    tau: &DVector<f64>,
) -> Result<SandwichResult> {
    sandwich_covariance_with(cohort, fit, scheme, tau, CrossBlock::default())
}

pub fn sandwich_covariance_with(
    cohort: &Cohort,
    fit: Option<&PropensityFit>,
    scheme: WeightScheme,
    tau: &DVector<f64>,
    cross: CrossBlock,
) -> Result<SandwichResult> {
    let data = SurvivalView::from_cohort(cohort);
    let n = cohort.n();
    let nf = n as f64;
    let j = cohort.contrasts();
    let fit = if scheme.needs_propensity() {
        Some(fit.ok_or_else(|| {
            Error::InvalidArgument(format!("scheme {scheme} requires a propensity fit"))
        })?)
    } else {
        None
    };
    let weights = match fit {
        Some(f) => weights_from_probs(&f.probs, cohort.treatment(), scheme)?.weights,
        None => vec![1.0; n],
    };
    let order = RiskSetOrder::new(data.time);
    let eval = evaluate_score_ordered(data, &order, &weights, tau)?;
    let (psi, big_psi) = score_residuals(data, &weights, tau);

    let a_tt = &eval.info / nf;
    let (pi, a_tg, a_gg) = match fit {
        Some(f) => {
            let pi = score_contributions(&f.design, cohort.treatment(), &f.probs);
            let a_gg = fisher_information(&f.design, &f.probs) / nf;
            let a_tg = match cross {
                CrossBlock::FiniteDifference => cross_block_fd(data, &order, f, scheme, tau)?,
                CrossBlock::Analytic => cross_block_analytic(data, &order, f, scheme, &weights, tau),
            } / nf;
            (pi, a_tg, a_gg)
        }
        None => (DMatrix::zeros(n, 0), DMatrix::zeros(j, 0), DMatrix::zeros(0, 0)),
    };
    let p = pi.ncols();
    let dim = j + p;

    let mut a_hat = DMatrix::zeros(dim, dim);
    a_hat.view_mut((0, 0), (j, j)).copy_from(&a_tt);
    a_hat.view_mut((0, j), (j, p)).copy_from(&a_tg);
    a_hat.view_mut((j, j), (p, p)).copy_from(&a_gg);

    let mut phi = DMatrix::zeros(n, dim);
    phi.view_mut((0, 0), (n, j)).copy_from(&big_psi);
    phi.view_mut((0, j), (n, p)).copy_from(&pi);
    let b_hat = phi.transpose() * &phi / nf;

    let a_inv = linalg::inverse(&a_hat, "stacked Jacobian")?;
    let mut cov_joint = &a_inv * &b_hat * a_inv.transpose() / nf;
    linalg::symmetrize(&mut cov_joint);
    let cov_tau = cov_joint.view((0, 0), (j, j)).into_owned();

    let att_inv = linalg::inverse(&a_tt, "partial-likelihood information")?;
    let b_tt = b_hat.view((0, 0), (j, j)).into_owned();
    let mut cov_fixed = &att_inv * b_tt * att_inv.transpose() / nf;
    linalg::symmetrize(&mut cov_fixed);

    Ok(SandwichResult {
        cov_joint,
        cov_tau,
        cov_tau_fixed_weights: cov_fixed,
        a_hat,
        b_hat,
        pieces: StackedPieces {
            psi,
            big_psi,
            pi,
            a_tau_tau: a_tt,
            a_tau_gamma: a_tg,
            a_gamma_gamma: a_gg,
        },
    })
}
