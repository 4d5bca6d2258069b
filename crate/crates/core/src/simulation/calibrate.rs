//! Intercept and censoring-rate calibration over a fixed Monte Carlo sample.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seeds::{stream_rng, streams};
use crate::simulation::config::{ScenarioConfig, Setting};
use crate::simulation::dgp::{draw_treatment, gen_covariates, gen_outcomes, true_propensities};

pub const MAX_CALIBRATION_ITERATIONS: usize = 200;
pub const PREVALENCE_TOLERANCE: f64 = 0.002;
pub const CENSORING_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub intercepts: Vec<f64>,
    pub lambda_c: f64,
    pub prevalences: Vec<f64>,
    pub censoring_fraction: f64,
}

fn mean_propensities(probs: &DMatrix<f64>) -> Vec<f64> {
    let n = probs.nrows() as f64;
    (0..probs.ncols()).map(|k| probs.column(k).sum() / n).collect()
}

/// Intercepts giving equal expected prevalence in every treatment group.
pub fn calibrate_intercepts(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    calibrate_intercepts_with_size(cfg, cfg.calibration_size).map(|(a, _)| a)
}

/// As [`calibrate_intercepts`] with an explicit sample size; also returns
/// the achieved mean propensities.
pub fn calibrate_intercepts_with_size(cfg: &ScenarioConfig, size: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, streams::CALIBRATE_INTERCEPTS);
    // Antithetic pairs (X, -X): the covariate law is symmetric, and the
    // symmetric sample keeps the two treated arms of the three-level design
    // at exactly equal prevalence.
    let half = gen_covariates(size.div_ceil(2), &mut rng);
    let x = DMatrix::from_fn(2 * half.nrows(), half.ncols(), |i, k| {
        if i < half.nrows() {
            half[(i, k)]
        } else {
            -half[(i - half.nrows(), k)]
        }
    });
    let levels = cfg.levels();
    let target = 1.0 / levels as f64;
    let mut alpha = vec![0.0; cfg.setting.n_intercepts()];
    let damping = 0.8;
    let mut prev = Vec::new();
    for _ in 0..MAX_CALIBRATION_ITERATIONS {
        prev = mean_propensities(&true_propensities(cfg, &x, &alpha));
        let step: Vec<f64> = match cfg.setting {
            // Both treated groups share one intercept, so match their average.
            Setting::Multi3 => vec![prev[0].ln() - ((prev[1] + prev[2]) / 2.0).ln()],
            Setting::Factorial2x2 => (1..levels).map(|k| prev[0].ln() - prev[k].ln()).collect(),
        };
        let mut largest = 0.0f64;
        for (a, s) in alpha.iter_mut().zip(&step) {
            *a += damping * s;
            largest = largest.max(s.abs());
        }
        if largest < 1e-10 {
            break;
        }
    }
    let worst = prev.iter().map(|p| (p - target).abs()).fold(0.0, f64::max);
    if worst > PREVALENCE_TOLERANCE {
        return Err(Error::Calibration(format!(
            "intercepts did not reach equal prevalence in {MAX_CALIBRATION_ITERATIONS} iterations (max deviation {worst:.4})"
        )));
    }
    Ok((alpha, prev))
}

/// Observed-arm event times and unit censoring draws for a calibration sample.
struct CensoringSample {
    event_times: Vec<f64>,
    exp_draws: Vec<f64>,
}

fn censoring_sample(cfg: &ScenarioConfig, intercepts: &[f64], size: usize, seed: u64) -> CensoringSample {
    let mut rng = stream_rng(seed, streams::CALIBRATE_CENSORING);
    let x = gen_covariates(size, &mut rng);
    let probs = true_propensities(cfg, &x, intercepts);
    let z = draw_treatment(&probs, &mut rng);
    let t = gen_outcomes(&x, &cfg.theta, &cfg.beta, cfg.weibull_shape, cfg.weibull_scale, &mut rng);
    let exp_draws = (0..size).map(|_| Exp1.sample(&mut rng)).collect();
    CensoringSample {
        event_times: (0..size).map(|i| t[(i, z[i])]).collect(),
        exp_draws,
    }
}

impl CensoringSample {
    /// Fraction with `C = E / lambda < T`.
    fn censored_fraction(&self, lambda: f64) -> f64 {
        let censored = self
            .event_times
            .iter()
            .zip(&self.exp_draws)
            .filter(|(t, e)| **e / lambda < **t)
            .count();
        censored as f64 / self.event_times.len() as f64
    }
}

/// Empirical censoring fraction at rate `lambda_c` on a sample drawn from `seed`.
pub fn censoring_fraction(cfg: &ScenarioConfig, intercepts: &[f64], lambda_c: f64, size: usize, seed: u64) -> f64 {
    censoring_sample(cfg, intercepts, size, seed).censored_fraction(lambda_c)
}

/// Exponential censoring rate achieving `cfg.target_censoring`.
pub fn calibrate_censoring(cfg: &ScenarioConfig, intercepts: &[f64]) -> Result<f64> {
    calibrate_censoring_with_size(cfg, intercepts, cfg.calibration_size).map(|(l, _)| l)
}

pub fn calibrate_censoring_with_size(cfg: &ScenarioConfig, intercepts: &[f64], size: usize) -> Result<(f64, f64)> {
    cfg.validate()?;
    let target = cfg.target_censoring;
    let sample = censoring_sample(cfg, intercepts, size, cfg.seed);
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e3f64.ln());
    let f_lo = sample.censored_fraction(lo.exp());
    let f_hi = sample.censored_fraction(hi.exp());
    if !(f_lo < target && target < f_hi) {
        return Err(Error::Calibration(format!(
            "censoring bracket [{f_lo:.4}, {f_hi:.4}] does not contain target {target}"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    let mut achieved = sample.censored_fraction(mid.exp());
    for _ in 0..MAX_CALIBRATION_ITERATIONS {
        if (achieved - target).abs() <= 1e-5 || hi - lo < 1e-12 {
            break;
        }
        if achieved < target {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        achieved = sample.censored_fraction(mid.exp());
    }
    if (achieved - target).abs() > CENSORING_TOLERANCE {
        return Err(Error::Calibration(format!(
            "censoring fraction {achieved:.4} not within {CENSORING_TOLERANCE} of {target}"
        )));
    }
    Ok((mid.exp(), achieved))
}

/// Both calibrations at the configured Monte Carlo size.
pub fn calibrate(cfg: &ScenarioConfig) -> Result<Calibration> {
    let (intercepts, prevalences) = calibrate_intercepts_with_size(cfg, cfg.calibration_size)?;
    let (lambda_c, censoring_fraction) = calibrate_censoring_with_size(cfg, &intercepts, cfg.calibration_size)?;
    Ok(Calibration {
        intercepts,
        lambda_c,
        prevalences,
        censoring_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(setting: Setting, psi: f64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(setting, psi, 0.25);
        cfg.calibration_size = 20_000;
        cfg
    }

    #[test]
    fn symmetric_design_needs_no_intercept() {
        let (a, _) = calibrate_intercepts_with_size(&small(Setting::Multi3, 0.0), 1000).unwrap();
        assert!(a[0].abs() < 1e-12);
        let (a, _) = calibrate_intercepts_with_size(&small(Setting::Factorial2x2, 0.0), 1000).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn prevalences_hit_target() {
        let cfg = small(Setting::Factorial2x2, 2.0);
        let (_, prev) = calibrate_intercepts_with_size(&cfg, cfg.calibration_size).unwrap();
        assert!(prev.iter().all(|p| (p - 0.25).abs() < PREVALENCE_TOLERANCE));
    }

    #[test]
    fn censoring_monotone_in_rate() {
        let cfg = small(Setting::Multi3, 1.0);
        let s = censoring_sample(&cfg, &[0.0], 5000, 3);
        let f: Vec<f64> = [0.1, 0.5, 2.0].iter().map(|&l| s.censored_fraction(l)).collect();
        assert!(f[0] < f[1] && f[1] < f[2]);
    }

    #[test]
    fn zero_target_rejected() {
        let mut cfg = small(Setting::Multi3, 1.0);
        cfg.target_censoring = 0.0;
        let err = calibrate_censoring(&cfg, &[0.0]).unwrap_err();
        assert!(err.to_string().contains("target must be in (0,1)"));
    }
}
