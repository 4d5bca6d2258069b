//! Replicate study comparing weighted and unweighted estimators.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::cox::{fit_cox, fit_mhr, map_resamples, normal_quantile, sandwich_covariance, summarize_draws};
use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::propensity::{compute_weights, fit_multinomial_logit, PropensityFit, WeightScheme};
use crate::seeds::stream_rng;
use crate::simulation::calibrate::{calibrate, Calibration};
use crate::simulation::config::ScenarioConfig;
use crate::simulation::dgp::generate_replicate;
use crate::simulation::estimand::{true_estimand, EstimandResult};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "OW")]
    Ow,
    Naive,
    Multivariable,
}

pub const METHODS: [Method; 4] = [Method::Ipw, Method::Ow, Method::Naive, Method::Multivariable];

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ipw => "IPW",
            Method::Ow => "OW",
            Method::Naive => "Naive",
            Method::Multivariable => "Multivariable",
        })
    }
}

/// True values each method is judged against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimands {
    pub ipw: EstimandResult,
    pub ow: EstimandResult,
}

impl Estimands {
    pub fn target(&self, method: Method) -> &[f64] {
        match method {
            Method::Ow => &self.ow.tau,
            _ => &self.ipw.tau,
        }
    }
}

/// Estimates from one method on one cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodDraw {
    pub tau: DVector<f64>,
    /// Robust sandwich SE for weighted methods, model-based otherwise.
    pub se: DVector<f64>,
    pub se_bootstrap: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub component: usize,
    pub label: String,
    pub target_tau: f64,
    pub mean_tau: f64,
    /// Signed `(mean exp(tau_hat) - exp(tau*)) / exp(tau*)`.
    pub relative_bias: f64,
    pub coverage: f64,
    pub mean_se_robust: f64,
    pub mean_se_bootstrap: Option<f64>,
    pub mc_sd: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: ScenarioConfig,
    pub calibration: Calibration,
    pub estimands: Estimands,
    pub rows: Vec<MethodSummary>,
    pub completed: usize,
    pub failed: usize,
    pub failure_reasons: BTreeMap<String, usize>,
}

impl StudyReport {
    pub fn row(&self, method: Method, component: usize) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method && r.component == component)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,component,label,target_tau,mean_tau,relative_bias,coverage,mean_se_robust,mean_se_bootstrap,mc_sd,replicates\n",
        );
        for r in &self.rows {
            let bs = r.mean_se_bootstrap.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.component + 1,
                quoted(&r.label),
                r.target_tau,
                r.mean_tau,
                r.relative_bias,
                r.coverage,
                r.mean_se_robust,
                bs,
                r.mc_sd,
                r.replicates
            );
        }
        out
    }

    /// Human-readable table rounded to two decimals.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>9} {:>9} {:>7} {:>7} {:>7}",
            "Method", "tau", "Rel.Bias", "Coverage", "SE(ro)", "SE(bs)", "MC SD"
        );
        for r in &self.rows {
            let bs = r
                .mean_se_bootstrap
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<14} {:>6} {:>9.2} {:>9.2} {:>7.2} {:>7} {:>7.2}",
                r.method.to_string(),
                format!("tau{}", r.component + 1),
                r.relative_bias,
                r.coverage,
                r.mean_se_robust,
                bs,
                r.mc_sd
            );
        }
        let _ = writeln!(
            out,
            "replicates: {} completed, {} failed",
            self.completed, self.failed
        );
        out
    }
}

/// Treatment indicators followed by all covariates.
fn multivariable_design(cohort: &Cohort) -> DMatrix<f64> {
    let j = cohort.contrasts();
    let p = cohort.p();
    let mut d = DMatrix::zeros(cohort.n(), j + p);
    for (i, &z) in cohort.treatment().iter().enumerate() {
        if z > 0 {
            d[(i, z - 1)] = 1.0;
        }
        for k in 0..p {
            d[(i, j + k)] = cohort.covariates()[(i, k)];
        }
    }
    d
}

fn multivariable_tau(cohort: &Cohort) -> Result<(DVector<f64>, DVector<f64>)> {
    let j = cohort.contrasts();
    let fit = fit_cox(
        cohort.time(),
        cohort.event(),
        &vec![1.0; cohort.n()],
        &multivariable_design(cohort),
    )?;
    let tau = fit.beta.rows(0, j).into_owned();
    let se = DVector::from_fn(j, |k, _| fit.covariance[(k, k)].max(0.0).sqrt());
    Ok((tau, se))
}

fn weighted_tau(cohort: &Cohort, ps: &PropensityFit, scheme: WeightScheme) -> Result<DVector<f64>> {
    let w = compute_weights(ps, cohort.treatment(), scheme)?;
    Ok(fit_mhr(cohort, &w.weights)?.tau)
}

fn diag_sqrt(m: &DMatrix<f64>) -> DVector<f64> {
    m.diagonal().map(|v| v.max(0.0).sqrt())
}

/// Point estimates of every method, sharing one propensity fit.
fn all_taus(cohort: &Cohort) -> Result<Vec<DVector<f64>>> {
    let ps = fit_multinomial_logit(cohort)?;
    Ok(vec![
        weighted_tau(cohort, &ps, WeightScheme::Ipw)?,
        weighted_tau(cohort, &ps, WeightScheme::Overlap)?,
        fit_mhr(cohort, &vec![1.0; cohort.n()])?.tau,
        multivariable_tau(cohort)?.0,
    ])
}

/// Fits every method on `cohort`, in [`METHODS`] order.
pub fn analyze_cohort(cohort: &Cohort, bootstrap_b: usize, bootstrap_seed: u64) -> Result<Vec<MethodDraw>> {
    let ps = fit_multinomial_logit(cohort)?;
    let mut draws = Vec::with_capacity(METHODS.len());
    for scheme in [WeightScheme::Ipw, WeightScheme::Overlap] {
        let w = compute_weights(&ps, cohort.treatment(), scheme)?;
        let est = fit_mhr(cohort, &w.weights)?;
        let sw = sandwich_covariance(cohort, Some(&ps), scheme, &est.tau)?;
        draws.push(MethodDraw {
            se: diag_sqrt(&sw.cov_tau),
            tau: est.tau,
            se_bootstrap: None,
        });
    }
    let naive = fit_mhr(cohort, &vec![1.0; cohort.n()])?;
    draws.push(MethodDraw {
        se: diag_sqrt(&naive.model_covariance()?),
        tau: naive.tau,
        se_bootstrap: None,
    });
    let (tau, se) = multivariable_tau(cohort)?;
    draws.push(MethodDraw {
        tau,
        se,
        se_bootstrap: None,
    });

    if bootstrap_b >= 2 {
        let outcomes = map_resamples(cohort, bootstrap_b, bootstrap_seed, all_taus);
        let schemes = [
            WeightScheme::Ipw,
            WeightScheme::Overlap,
            WeightScheme::Unit,
            WeightScheme::Unit,
        ];
        for (m, draw) in draws.iter_mut().enumerate() {
            let per_method = outcomes
                .iter()
                .map(|o| match o {
                    Ok(Ok(v)) => Ok(v[m].clone()),
                    Ok(Err(e)) | Err(e) => Err(e.clone()),
                })
                .collect();
            draw.se_bootstrap = Some(summarize_draws(schemes[m], per_method)?.se());
        }
    }
    Ok(draws)
}

/// Simulates and analyzes replicate `r`.
pub fn run_replicate(cfg: &ScenarioConfig, calib: &Calibration, r: usize) -> Result<Vec<MethodDraw>> {
    let mut rng = stream_rng(cfg.seed, r as u64);
    let data = generate_replicate(cfg, &calib.intercepts, calib.lambda_c, cfg.n, &mut rng)?;
    let boot_seed = rand::Rng::gen::<u64>(&mut rng);
    analyze_cohort(&data.cohort, cfg.bootstrap_b, boot_seed)
}

/// Calibrations and both true estimands for `cfg`.
pub fn prepare(cfg: &ScenarioConfig) -> Result<(Calibration, Estimands)> {
    cfg.validate()?;
    let calib = calibrate(cfg)?;
    let ipw = true_estimand(cfg, &calib.intercepts, WeightScheme::Ipw, cfg.estimand_size, cfg.seed)?;
    let ow = true_estimand(cfg, &calib.intercepts, WeightScheme::Overlap, cfg.estimand_size, cfg.seed)?;
    Ok((calib, Estimands { ipw, ow }))
}

fn failure_reason(e: &Error) -> String {
    match e {
        Error::BootstrapUnstable { .. } => "bootstrap unstable".into(),
        Error::QuasiSeparation { .. } => "propensity quasi-separation".into(),
        Error::SurvivalSeparation { .. } => "separation in survival ordering".into(),
        Error::NonConvergence { .. } => "nonconvergence".into(),
        Error::Singular { .. } => "singular information".into(),
        Error::Positivity { .. } => "propensity at boundary".into(),
        other => other.to_string(),
    }
}

pub fn run_study(cfg: &ScenarioConfig, calib: &Calibration, estimands: &Estimands) -> Result<StudyReport> {
    cfg.validate()?;
    if cfg.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    let outcomes: Vec<Result<Vec<MethodDraw>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, calib, r))
        .collect();
    let mut failure_reasons: BTreeMap<String, usize> = BTreeMap::new();
    let mut ok = Vec::new();
    for o in outcomes {
        match o {
            Ok(d) => ok.push(d),
            Err(e) => *failure_reasons.entry(failure_reason(&e)).or_default() += 1,
        }
    }
    let failed = cfg.replicates - ok.len();
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.replicates as f64 || ok.is_empty() {
        return Err(Error::StudyAborted {
            failed,
            replicates: cfg.replicates,
        });
    }
    let labels: Vec<String> = match cfg.setting {
        crate::simulation::config::Setting::Multi3 => vec!["1".into(), "2".into()],
        crate::simulation::config::Setting::Factorial2x2 => crate::data::FactorialCoding::labels()[1..].to_vec(),
    };
    let z = normal_quantile(0.95);
    let mut rows = Vec::new();
    for (m, &method) in METHODS.iter().enumerate() {
        let target = estimands.target(method);
        for (k, &t) in target.iter().enumerate() {
            let taus: Vec<f64> = ok.iter().map(|d| d[m].tau[k]).collect();
            let ses: Vec<f64> = ok.iter().map(|d| d[m].se[k]).collect();
            let count = taus.len() as f64;
            let mean_tau = taus.iter().sum::<f64>() / count;
            let mean_hr = taus.iter().map(|v| v.exp()).sum::<f64>() / count;
            let covered = taus
                .iter()
                .zip(&ses)
                .filter(|(tau, se)| (*tau - t).abs() <= z * *se)
                .count();
            let mc_sd = if taus.len() > 1 {
                (taus.iter().map(|v| (v - mean_tau).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
            } else {
                0.0
            };
            let mean_se_bootstrap = ok
                .iter()
                .map(|d| d[m].se_bootstrap.as_ref().map(|s| s[k]))
                .sum::<Option<f64>>()
                .map(|s| s / count);
            rows.push(MethodSummary {
                method,
                component: k,
                label: labels[k].clone(),
                target_tau: t,
                mean_tau,
                relative_bias: (mean_hr - t.exp()) / t.exp(),
                coverage: covered as f64 / count,
                mean_se_robust: ses.iter().sum::<f64>() / count,
                mean_se_bootstrap,
                mc_sd,
                replicates: taus.len(),
            });
        }
    }
    Ok(StudyReport {
        config: cfg.clone(),
        calibration: calib.clone(),
        estimands: estimands.clone(),
        rows,
        completed: ok.len(),
        failed,
        failure_reasons,
    })
}

/// Factorial labels such as `(1,0)` contain commas.
fn quoted(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
