//! Data-generating processes for the multiple-treatment and factorial designs.

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::data::{Cohort, FactorialCoding};
use crate::error::Result;
use crate::simulation::config::{ScenarioConfig, Setting};

pub const N_COVARIATES: usize = 6;

/// `(X1, X2, X3)` equicorrelated normal (rho = 0.5), `(X4, X5, X6)` centered
/// Bernoulli(0.5).
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let corr = Matrix3::new(1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0);
    let l = corr.cholesky().expect("equicorrelation matrix is positive definite").l();
    let mut x = DMatrix::zeros(n, N_COVARIATES);
    for i in 0..n {
        let z: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        for r in 0..3 {
            x[(i, r)] = (0..=r).map(|c| l[(r, c)] * z[c]).sum();
        }
        for k in 3..6 {
            x[(i, k)] = if rng.gen::<bool>() { 0.5 } else { -0.5 };
        }
    }
    x
}

fn softmax_row(eta: &[f64], out: &mut [f64]) {
    let top = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, e) in out.iter_mut().zip(eta) {
        *o = (e - top).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn dot(x: &DMatrix<f64>, i: usize, v: &[f64]) -> f64 {
    v.iter().enumerate().map(|(k, b)| x[(i, k)] * b).sum()
}

/// Linear predictors of the treatment model for one unit, reference first.
///
/// `intercepts` holds `[alpha]` for the three-level design and
/// `[alpha_10, alpha_01, alpha_11]` for the factorial design, whose cells are
/// ordered as in [`FactorialCoding`].
pub fn treatment_logits(setting: Setting, psi: f64, sb: f64, sc: f64, intercepts: &[f64]) -> Vec<f64> {
    match setting {
        Setting::Multi3 => vec![0.0, intercepts[0] + psi * sb, intercepts[0] - psi * sb],
        Setting::Factorial2x2 => vec![
            0.0,
            intercepts[0] + psi * sb,
            intercepts[1] - psi * sb,
            intercepts[2] + psi * sc,
        ],
    }
}

/// True generalized propensities, `n x levels`.
pub fn true_propensities(cfg: &ScenarioConfig, x: &DMatrix<f64>, intercepts: &[f64]) -> DMatrix<f64> {
    let b = cfg.b_unit();
    let c = cfg.c_unit();
    let levels = cfg.levels();
    let mut out = DMatrix::zeros(x.nrows(), levels);
    let mut row = vec![0.0; levels];
    for i in 0..x.nrows() {
        let sb = dot(x, i, &b);
        let sc = dot(x, i, &c);
        let eta = treatment_logits(cfg.setting, cfg.psi, sb, sc, intercepts);
        softmax_row(&eta, &mut row);
        for (k, v) in row.iter().enumerate() {
            out[(i, k)] = *v;
        }
    }
    out
}

/// One categorical draw per row of `probs` by inversion.
pub fn draw_treatment<R: Rng + ?Sized>(probs: &DMatrix<f64>, rng: &mut R) -> Vec<usize> {
    let levels = probs.ncols();
    (0..probs.nrows())
        .map(|i| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for k in 0..levels - 1 {
                acc += probs[(i, k)];
                if u < acc {
                    return k;
                }
            }
            levels - 1
        })
        .collect()
}

/// Three-level assignment with logits `(0, alpha + psi b'X, alpha - psi b'X)`.
pub fn gen_treatment_multi3<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    psi: f64,
    alpha: f64,
    rng: &mut R,
) -> (Vec<usize>, DMatrix<f64>) {
    let cfg = ScenarioConfig::new(Setting::Multi3, psi, 0.25);
    let probs = true_propensities(&cfg, x, &[alpha]);
    (draw_treatment(&probs, rng), probs)
}

/// Factorial assignment; returns the `(z1, z2)` pairs, their coded labels and
/// the cell propensities.
pub fn gen_treatment_factorial<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    psi: f64,
    alphas: &[f64; 3],
    rng: &mut R,
) -> (Vec<(u8, u8)>, Vec<usize>, DMatrix<f64>) {
    let cfg = ScenarioConfig::new(Setting::Factorial2x2, psi, 0.25);
    let probs = true_propensities(&cfg, x, alphas);
    let labels = draw_treatment(&probs, rng);
    let pairs = labels
        .iter()
        .map(|&l| FactorialCoding::decode(l).expect("four cells"))
        .collect();
    (pairs, labels, probs)
}

/// Potential event times for every arm by Weibull-PH inversion,
/// `T(z) = scale * (-log U / exp(theta_z + beta'X))^(1/shape)`.
pub fn gen_outcomes<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    theta: &[f64],
    beta: &[f64],
    shape: f64,
    scale: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let levels = theta.len();
    let mut out = DMatrix::zeros(x.nrows(), levels);
    for i in 0..x.nrows() {
        let lp = dot(x, i, beta);
        for (z, th) in theta.iter().enumerate() {
            let e: f64 = Exp1.sample(rng);
            out[(i, z)] = scale * (e / (th + lp).exp()).powf(1.0 / shape);
        }
    }
    out
}

/// A simulated cohort with its latent potential outcomes.
#[derive(Debug, Clone)]
pub struct ReplicateData {
    pub cohort: Cohort,
    pub potential_times: DMatrix<f64>,
    pub censoring: Vec<f64>,
    pub true_probs: DMatrix<f64>,
}

/// Draws one cohort of `n` units.
pub fn generate_replicate<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    intercepts: &[f64],
    lambda_c: f64,
    n: usize,
    rng: &mut R,
) -> Result<ReplicateData> {
    let x = gen_covariates(n, rng);
    let probs = true_propensities(cfg, &x, intercepts);
    let z = draw_treatment(&probs, rng);
    let t = gen_outcomes(&x, &cfg.theta, &cfg.beta, cfg.weibull_shape, cfg.weibull_scale, rng);
    let censoring: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e / lambda_c
        })
        .collect();
    let time = (0..n).map(|i| t[(i, z[i])].min(censoring[i])).collect();
    let event = (0..n).map(|i| t[(i, z[i])] <= censoring[i]).collect();
    let labels = match cfg.setting {
        Setting::Multi3 => vec!["0".into(), "1".into(), "2".into()],
        Setting::Factorial2x2 => FactorialCoding::labels(),
    };
    let names = (1..=N_COVARIATES).map(|k| format!("x{k}")).collect();
    let cohort = Cohort::with_labels(time, event, z, x, names, labels)?;
    Ok(ReplicateData {
        cohort,
        potential_times: t,
        censoring,
        true_probs: probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::stream_rng;

    #[test]
    fn zero_overlap_parameter_gives_uniform_propensities() {
        let mut rng = stream_rng(1, 0);
        let x = gen_covariates(50, &mut rng);
        let (_, probs) = gen_treatment_multi3(&x, 0.0, 0.0, &mut rng);
        assert!(probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let (_, _, probs) = gen_treatment_factorial(&x, 0.0, &[0.0; 3], &mut rng);
        assert!(probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn symmetric_logits_when_index_vanishes() {
        let eta = treatment_logits(Setting::Multi3, 2.0, 0.0, 0.0, &[0.4]);
        assert_eq!(eta[1], eta[2]);
    }

    #[test]
    fn factorial_rows_sum_to_one() {
        let mut rng = stream_rng(2, 0);
        let x = gen_covariates(200, &mut rng);
        let (pairs, labels, probs) = gen_treatment_factorial(&x, 2.0, &[0.1, -0.2, 0.3], &mut rng);
        for i in 0..200 {
            assert!((probs.row(i).sum() - 1.0).abs() < 1e-12);
            let (a, b) = pairs[i];
            assert_eq!(FactorialCoding::encode(a, b).unwrap(), labels[i]);
        }
    }

    #[test]
    fn latent_consistency() {
        let cfg = ScenarioConfig::new(Setting::Multi3, 1.0, 0.25);
        let mut rng = stream_rng(3, 0);
        let rep = generate_replicate(&cfg, &[-0.25], 0.24, 300, &mut rng).unwrap();
        let c = &rep.cohort;
        for i in 0..c.n() {
            let t = rep.potential_times[(i, c.treatment()[i])];
            assert_eq!(c.time()[i], t.min(rep.censoring[i]));
            assert_eq!(c.event()[i], t <= rep.censoring[i]);
        }
    }
}
