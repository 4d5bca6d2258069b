use std::fmt::Write as _;
use std::fs;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};
use wcox_core::cox::{bootstrap_covariance, fit_mhr, sandwich_covariance, MhrEstimate, VarianceMethod};
use wcox_core::data::{Cohort, FactorialCoding};
use wcox_core::km::weighted_km_all;
use wcox_core::propensity::{
    balance_table, compute_weights, fit_multinomial_logit, propensity_histogram, trim, PropensityFit,
    TrimReport, WeightScheme, WeightSet,
};
use wcox_core::seeds::{stream_rng, streams};
use wcox_core::simulation::{
    calibrate, calibrate_intercepts, event_rates as sim_event_rates, generate_replicate,
    poor_overlap_cohort, prepare, run_study, true_estimand, ScenarioConfig, Setting, StudyReport,
    MIN_ESTIMAND_SIZE,
};

use crate::input::{factorial_code, read_cohort, ColumnSpec, Treatment};
use crate::output::{csv_field, emit, km_svg, to_json, ManifestBuilder, RunManifest};
use crate::{
    BalanceArgs, CliError, CohortArgs, EstimandArgs, EventRatesArgs, FitArgs, GenerateArgs, KmArgs,
    PsHistArgs, ScenarioArgs, SimulateArgs,
};

/// A validated cohort with its weights, ready for estimation.
struct Prepared {
    cohort: Cohort,
    scheme: WeightScheme,
    ps: Option<PropensityFit>,
    weights: WeightSet,
    trimming: Option<TrimReport>,
    manifest: ManifestBuilder,
}

fn cohort_config(a: &CohortArgs) -> Value {
    json!({
        "input": a.input.display().to_string(),
        "time": a.time,
        "event": a.event,
        "treatment": a.treatment,
        "z1": a.z1,
        "z2": a.z2,
        "covariates": a.covariates,
        "reference": a.reference,
        "weight_scheme": a.weight_scheme,
        "trim": a.trim,
        "seed": a.seed,
    })
}

fn parse_scheme(s: &str, cohort: &Cohort) -> Result<WeightScheme, CliError> {
    if let Some(label) = s.trim().strip_prefix("att:") {
        let labels = cohort.treatment_labels();
        let found = labels.iter().position(|l| l == label).or_else(|| {
            factorial_code(label)
                .ok()
                .and_then(|code| labels.iter().position(|l| *l == FactorialCoding::labels()[code]))
        });
        return found
            .map(WeightScheme::Att)
            .ok_or_else(|| CliError::Usage(format!("att label '{label}' is not a treatment level")));
    }
    Ok(s.parse()?)
}

fn prepare_cohort(command: &str, a: &CohortArgs, config: Value, need_ps: bool) -> Result<Prepared, CliError> {
    let treatment = match (&a.treatment, &a.z1, &a.z2) {
        (Some(t), None, None) => Treatment::Single(t.clone()),
        (None, Some(z1), Some(z2)) => Treatment::Factorial {
            z1: z1.clone(),
            z2: z2.clone(),
        },
        _ => return Err(CliError::Usage("give either --treatment or both --z1 and --z2".into())),
    };
    let spec = ColumnSpec {
        time: a.time.clone(),
        event: a.event.clone(),
        treatment,
        covariates: a.covariates.clone(),
        reference: a.reference.clone(),
    };
    let mut manifest = ManifestBuilder::new(command, config, Some(a.seed), a.timing);
    manifest.add_input(&a.input)?;
    let mut cohort = read_cohort(&a.input, &spec)?;
    let scheme = parse_scheme(&a.weight_scheme, &cohort)?;
    let mut ps = if need_ps || scheme.needs_propensity() || a.trim.is_some() {
        Some(fit_multinomial_logit(&cohort)?)
    } else {
        None
    };
    let mut trimming = None;
    if let (Some(threshold), Some(fit)) = (a.trim, ps.as_ref()) {
        let t = trim(&cohort, fit, threshold, true)?;
        cohort = t.cohort;
        ps = Some(t.fit);
        trimming = Some(t.report);
    }
    let weights = match (&ps, scheme.needs_propensity()) {
        (Some(fit), true) => compute_weights(fit, cohort.treatment(), scheme)?,
        _ => WeightSet::unit(cohort.n()),
    };
    Ok(Prepared {
        cohort,
        scheme,
        ps,
        weights,
        trimming,
        manifest,
    })
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct Contrast {
    label: String,
    tau: f64,
    hr: f64,
    se: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
}

#[derive(Serialize)]
struct FitReport {
    reference: String,
    contrasts: Vec<Contrast>,
    tau: Vec<f64>,
    hr: Vec<f64>,
    se: Option<Vec<f64>>,
    ci: Value,
    covariance: Option<Vec<Vec<f64>>>,
    variance_method: VarianceMethod,
    weight_scheme: String,
    n: usize,
    n_events: usize,
    group_counts: Vec<usize>,
    convergence: Value,
    propensity: Option<Value>,
    trimming: Option<TrimReport>,
    balance: Option<Value>,
    bootstrap: Option<Value>,
    manifest: RunManifest,
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let mut config = cohort_config(&a.cohort);
    config["variance"] = json!(a.variance);
    config["level"] = json!(a.level);
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::Usage("--level must be in (0,1)".into()));
    }
    let p = prepare_cohort("fit", &a.cohort, config, false)?;
    let mut est: MhrEstimate = fit_mhr(&p.cohort, &p.weights.weights)?;
    let mut bootstrap = None;
    let variance = a.variance.trim().to_ascii_lowercase();
    match variance.as_str() {
        "robust" => {
            let sw = sandwich_covariance(&p.cohort, p.ps.as_ref(), p.scheme, &est.tau)?;
            est.set_covariance(sw.cov_tau, VarianceMethod::Robust, a.level);
        }
        "model" => {
            let cov = est.model_covariance()?;
            est.set_covariance(cov, VarianceMethod::Model, a.level);
        }
        "none" => {}
        other => {
            let b = other
                .strip_prefix("bootstrap:")
                .and_then(|b| b.parse::<usize>().ok())
                .ok_or_else(|| CliError::Usage(format!("unknown variance '{other}'")))?;
            let boot = bootstrap_covariance(&p.cohort, p.scheme, b, a.cohort.seed)?;
            bootstrap = Some(json!({
                "requested": boot.requested,
                "dropped": boot.dropped,
                "drop_reasons": boot.drop_reasons,
            }));
            est.set_covariance(boot.cov_tau, VarianceMethod::Bootstrap, a.level);
        }
    }
    let balance = if p.cohort.p() > 0 {
        let table = balance_table(&p.cohort, &p.weights)?;
        Some(json!({
            "max_abs_smd_unweighted": table.max_abs_unweighted(),
            "max_abs_smd_weighted": table.max_abs_weighted(),
        }))
    } else {
        None
    };
    let contrasts = (0..est.contrasts())
        .map(|k| Contrast {
            label: est.contrast_labels[k].clone(),
            tau: est.tau[k],
            hr: est.hr[k],
            se: est.se.as_ref().map(|s| s[k]),
            ci_low: est.ci_low.as_ref().map(|s| s[k]),
            ci_high: est.ci_high.as_ref().map(|s| s[k]),
        })
        .collect();
    let report = FitReport {
        reference: est.reference_label.clone(),
        contrasts,
        tau: vec_of(&est.tau),
        hr: vec_of(&est.hr),
        se: est.se.as_ref().map(vec_of),
        ci: json!({
            "level": a.level,
            "low": est.ci_low.as_ref().map(vec_of),
            "high": est.ci_high.as_ref().map(vec_of),
        }),
        covariance: est.cov_tau.as_ref().map(rows_of),
        variance_method: est.variance_method,
        weight_scheme: p.scheme.to_string(),
        n: p.cohort.n(),
        n_events: p.cohort.n_events(),
        group_counts: p.cohort.group_counts(),
        convergence: json!({
            "converged": est.converged,
            "iterations": est.iterations,
            "score_norm": est.score_norm,
            "loglik": est.loglik,
        }),
        propensity: p.ps.as_ref().map(|f| {
            json!({
                "converged": f.converged,
                "iterations": f.iterations,
                "gradient_norm": f.final_gradient_norm,
                "log_likelihood": f.log_likelihood,
                "ridge_applied": f.ridge_applied,
                "gamma": rows_of(&f.gamma),
            })
        }),
        trimming: p.trimming,
        balance,
        bootstrap,
        manifest: p.manifest.finish(),
    };
    emit(a.out.as_deref(), &to_json(&report))
}

pub fn km(a: &KmArgs) -> Result<(), CliError> {
    let mut config = cohort_config(&a.cohort);
    config["cumulative"] = json!(a.cumulative);
    let p = prepare_cohort("km", &a.cohort, config, false)?;
    let curves = weighted_km_all(&p.cohort, &p.weights.weights)?;
    let mut csv = String::from("group,label,time,survival,weighted_events,weighted_at_risk");
    if a.cumulative {
        csv.push_str(",risk");
    }
    csv.push('\n');
    for c in &curves {
        for k in 0..c.event_times.len() {
            let _ = write!(
                csv,
                "{},{},{},{},{},{}",
                c.group,
                csv_field(&c.label),
                c.event_times[k],
                c.survival[k],
                c.weighted_events[k],
                c.weighted_at_risk[k]
            );
            if a.cumulative {
                let _ = write!(csv, ",{}", 1.0 - c.survival[k]);
            }
            csv.push('\n');
        }
    }
    if let Some(svg) = &a.out_svg {
        let title = format!("Kaplan-Meier curves ({})", p.scheme);
        fs::write(svg, km_svg(&curves, a.cumulative, &title))
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", svg.display())))?;
    }
    emit(a.out_csv.as_deref(), &csv)
}

pub fn balance(a: &BalanceArgs) -> Result<(), CliError> {
    let p = prepare_cohort("balance", &a.cohort, cohort_config(&a.cohort), true)?;
    let table = balance_table(&p.cohort, &p.weights)?;
    let mut csv = String::from("covariate,group_a,group_b,smd_unweighted,smd_weighted\n");
    for e in &table.entries {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(&e.covariate),
            csv_field(&e.group_a),
            csv_field(&e.group_b),
            e.unweighted,
            e.weighted
        );
    }
    emit(a.out_csv.as_deref(), &csv)
}

pub fn ps_hist(a: &PsHistArgs) -> Result<(), CliError> {
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let p = prepare_cohort("ps-hist", &a.cohort, cohort_config(&a.cohort), true)?;
    let fit = p.ps.as_ref().expect("propensity fit requested");
    let labels = p.cohort.treatment_labels();
    let mut csv = String::from("group,score_for,bin_low,bin_high,count\n");
    for b in propensity_histogram(fit, p.cohort.treatment(), a.bins) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(&labels[b.group]),
            csv_field(&labels[b.score_for]),
            b.bin_low,
            b.bin_high,
            b.count
        );
    }
    emit(a.out_csv.as_deref(), &csv)
}

fn scenario(a: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_key_values(&text)?
        }
        None => ScenarioConfig::new(Setting::Multi3, 1.0, 0.25),
    };
    if let Some(s) = &a.setting {
        let setting: Setting = s.parse()?;
        if setting != cfg.setting {
            let fresh = ScenarioConfig::new(setting, cfg.psi, cfg.target_censoring);
            cfg.theta = fresh.theta;
            cfg.setting = setting;
        }
    }
    if let Some(psi) = a.psi {
        cfg.psi = psi;
    }
    if let Some(c) = a.censoring {
        cfg.target_censoring = c;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(size) = a.calibration_size {
        cfg.calibration_size = size;
    }
    Ok(cfg)
}

fn manifest_for(command: &str, cfg: &ScenarioConfig, inputs: &ScenarioArgs, timing: bool) -> Result<ManifestBuilder, CliError> {
    let mut m = ManifestBuilder::new(command, serde_json::to_value(cfg).expect("serializable config"), Some(cfg.seed), timing);
    if let Some(path) = &inputs.config {
        m.add_input(path)?;
    }
    Ok(m)
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    reports: &'a [StudyReport],
    manifest: RunManifest,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut base = scenario(&a.scenario)?;
    if let Some(r) = a.replicates {
        base.replicates = r;
    }
    if let Some(n) = a.n {
        base.n = n;
    }
    if let Some(b) = a.bootstrap_b {
        base.bootstrap_b = b;
    }
    if let Some(m) = a.m {
        base.estimand_size = m;
    }
    if base.replicates == 0 {
        return Err(CliError::Usage("--replicates must be positive".into()));
    }
    if base.bootstrap_b == 1 {
        return Err(CliError::Usage("--bootstrap-B must be 0 (off) or at least 2".into()));
    }
    if base.estimand_size < MIN_ESTIMAND_SIZE {
        return Err(wcox_core::Error::InvalidArgument(format!(
            "M too small: {} < {MIN_ESTIMAND_SIZE}",
            base.estimand_size
        ))
        .into());
    }
    base.validate()?;
    let cells: Vec<ScenarioConfig> = if a.full_grid {
        log::warn!("full grid: 6 scenarios x 1000 replicates with B = 200; expect hours of runtime");
        eprintln!("warning: --full-grid runs 6 scenarios with 1000 replicates each; this is slow");
        [1.0, 2.0, 3.0]
            .iter()
            .flat_map(|&psi| [0.25, 0.5].map(|c| (psi, c)))
            .map(|(psi, c)| {
                let mut cfg = base.clone();
                cfg.psi = psi;
                cfg.target_censoring = c;
                cfg.replicates = a.replicates.unwrap_or(1000);
                cfg.bootstrap_b = a.bootstrap_b.unwrap_or(200);
                cfg
            })
            .collect()
    } else {
        vec![base.clone()]
    };
    let manifest = manifest_for("simulate", &base, &a.scenario, a.timing)?;
    let mut reports = Vec::new();
    for cfg in &cells {
        let (calib, estimands) = prepare(cfg)?;
        reports.push(run_study(cfg, &calib, &estimands)?);
    }

    let mut csv = String::new();
    let mut table = String::new();
    for (k, r) in reports.iter().enumerate() {
        let body = r.to_csv();
        let mut lines = body.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            let _ = writeln!(csv, "setting,psi,censoring,{header}");
        }
        for line in lines {
            let _ = writeln!(csv, "{},{},{},{line}", r.config.setting, r.config.psi, r.config.target_censoring);
        }
        let _ = writeln!(
            table,
            "setting {} psi {} censoring {} n {} replicates {} bootstrap B {}",
            r.config.setting, r.config.psi, r.config.target_censoring, r.config.n, r.config.replicates, r.config.bootstrap_b
        );
        for (name, e) in [("ipw", &r.estimands.ipw), ("ow", &r.estimands.ow)] {
            let tau: Vec<String> = e.tau.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(
                table,
                "true tau ({name}) = ({}) [oracle M = {}, seed = {}]",
                tau.join(", "),
                e.m,
                e.seed
            );
        }
        table.push_str(&r.to_text_table());
        table.push('\n');
    }
    if let Some(path) = &a.out_csv {
        emit(Some(path), &csv)?;
    }
    if let Some(path) = &a.out_json {
        let out = SimulationOutput {
            reports: &reports,
            manifest: manifest.finish(),
        };
        emit(Some(path), &to_json(&out))?;
    }
    emit(a.out_table.as_deref(), &table)
}

pub fn estimand(a: &EstimandArgs) -> Result<(), CliError> {
    let cfg = scenario(&a.scenario)?;
    if a.m < MIN_ESTIMAND_SIZE {
        return Err(wcox_core::Error::InvalidArgument(format!("M too small: {} < {MIN_ESTIMAND_SIZE}", a.m)).into());
    }
    let scheme = match a.scheme.trim().strip_prefix("att:") {
        Some(level) => WeightScheme::Att(
            level
                .parse()
                .map_err(|_| CliError::Usage(format!("att level '{level}' must be an index")))?,
        ),
        None => a.scheme.parse()?,
    };
    cfg.validate()?;
    let intercepts = calibrate_intercepts(&cfg)?;
    let e = true_estimand(&cfg, &intercepts, scheme, a.m, cfg.seed)?;
    let labels: Vec<String> = match cfg.setting {
        Setting::Multi3 => vec!["1".into(), "2".into()],
        Setting::Factorial2x2 => FactorialCoding::labels()[1..].to_vec(),
    };
    let mut csv = String::from("setting,psi,scheme,component,label,tau,hr,m,seed,truncation_time\n");
    for (k, tau) in e.tau.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            cfg.setting,
            cfg.psi,
            e.scheme,
            k + 1,
            csv_field(&labels[k]),
            tau,
            e.hr[k],
            e.m,
            e.seed,
            e.truncation_time
        );
    }
    emit(a.out.as_deref(), &csv)
}

pub fn event_rates(a: &EventRatesArgs) -> Result<(), CliError> {
    let cfg = scenario(&a.scenario)?;
    if a.times.is_empty() || a.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(CliError::Usage("--times must be nonnegative numbers".into()));
    }
    let calib = calibrate(&cfg)?;
    let rates = sim_event_rates(&cfg, &calib, &a.times, a.size, cfg.seed)?;
    let mut csv = String::from("group,time,rate\n");
    for r in rates {
        let _ = writeln!(
            csv,
            "{},{},{}",
            csv_field(r.group.as_deref().unwrap_or("overall")),
            r.time,
            r.rate
        );
    }
    emit(a.out.as_deref(), &csv)
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let cfg = scenario(&a.scenario)?;
    if a.poor_overlap {
        let c = poor_overlap_cohort(a.n, cfg.seed)?;
        let mut csv = String::from("time,event,z,x1\n");
        for i in 0..c.n() {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                c.time()[i],
                u8::from(c.event()[i]),
                c.treatment()[i],
                c.covariates()[(i, 0)]
            );
        }
        return emit(a.out.as_deref(), &csv);
    }
    let mut cfg = cfg;
    cfg.n = a.n;
    cfg.validate()?;
    let calib = calibrate(&cfg)?;
    let mut rng = stream_rng(cfg.seed, streams::COHORT);
    let data = generate_replicate(&cfg, &calib.intercepts, calib.lambda_c, a.n, &mut rng)?;
    let c = &data.cohort;
    let factorial = cfg.setting == Setting::Factorial2x2;
    let mut csv = String::from(if factorial { "time,event,z1,z2" } else { "time,event,z" });
    for name in c.covariate_names() {
        let _ = write!(csv, ",{name}");
    }
    csv.push('\n');
    for i in 0..c.n() {
        let _ = write!(csv, "{},{}", c.time()[i], u8::from(c.event()[i]));
        if factorial {
            let (z1, z2) = FactorialCoding::decode(c.treatment()[i]).expect("four cells");
            let _ = write!(csv, ",{z1},{z2}");
        } else {
            let _ = write!(csv, ",{}", c.treatment()[i]);
        }
        for k in 0..c.p() {
            let _ = write!(csv, ",{}", c.covariates()[(i, k)]);
        }
        csv.push('\n');
    }
    emit(a.out.as_deref(), &csv)
}
