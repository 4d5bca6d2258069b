//! Invariants over randomly generated cohorts.

mod common;

use common::random_cohort;
use nalgebra::DVector;
use proptest::prelude::*;
use wcox_core::cox::{evaluate_score, fit_cox, SurvivalView};
use wcox_core::data::encode_factorial;
use wcox_core::propensity::{design_matrix, gamma_to_vec, log_likelihood, score, vec_to_gamma, WeightScheme};
use wcox_core::{
    compute_weights, fit_mhr, fit_multinomial_logit, validate_cohort, weighted_km, FactorialCoding,
    ValidationOptions,
};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn factorial_decode_inverts_encode(z1 in 0u8..2, z2 in 0u8..2) {
        let code = FactorialCoding::encode(z1, z2).unwrap();
        prop_assert_eq!(FactorialCoding::decode(code), Some((z1, z2)));
    }

    #[test]
    fn validation_is_idempotent(seed in 0u64..10_000, levels in 2usize..5) {
        let c = random_cohort(seed, 40, levels, 2);
        let opts = ValidationOptions {
            reference: None,
            covariate_names: c.covariate_names().to_vec(),
        };
        let once = validate_cohort(&c.to_records(), &opts).unwrap();
        let twice = validate_cohort(&once.to_records(), &opts).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.time(), c.time());
        prop_assert_eq!(once.treatment(), c.treatment());
    }

    #[test]
    fn propensity_rows_stochastic_and_score_zero(seed in 0u64..10_000, levels in 2usize..5) {
        let c = random_cohort(seed, 150, levels, 2);
        let fit = fit_multinomial_logit(&c).unwrap();
        for i in 0..c.n() {
            prop_assert!((fit.probs.row(i).sum() - 1.0).abs() <= 1e-12);
        }
        let s = score(&fit.design, c.treatment(), &fit.probs);
        prop_assert!(s.amax() <= 1e-8, "score {}", s.amax());
    }

    #[test]
    fn logit_score_is_loglik_gradient(seed in 0u64..10_000, levels in 2usize..4) {
        let c = random_cohort(seed, 60, levels, 2);
        let design = design_matrix(c.covariates());
        let q = design.ncols();
        let theta = DVector::from_fn((levels - 1) * q, |i, _| 0.1 * ((seed + i as u64) % 7) as f64 - 0.3);
        let gamma = vec_to_gamma(&theta, levels - 1);
        let probs = wcox_core::propensity::probabilities(&design, &gamma);
        let analytic = score(&design, c.treatment(), &probs);
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (log_likelihood(&design, c.treatment(), &vec_to_gamma(&up, levels - 1))
                - log_likelihood(&design, c.treatment(), &vec_to_gamma(&down, levels - 1)))
                / (2.0 * h);
            prop_assert!((fd - analytic[k]).abs() <= 1e-6 * analytic[k].abs().max(1.0));
        }
        prop_assert_eq!(gamma_to_vec(&gamma), theta);
    }

    #[test]
    fn cox_score_vanishes_and_information_positive(seed in 0u64..10_000, levels in 2usize..5) {
        let c = random_cohort(seed, 120, levels, 1);
        let ps = fit_multinomial_logit(&c).unwrap();
        let w = compute_weights(&ps, c.treatment(), WeightScheme::Overlap).unwrap();
        let fit = fit_mhr(&c, &w.weights).unwrap();
        prop_assert!(fit.converged);
        let eval = evaluate_score(SurvivalView::from_cohort(&c), &w.weights, &fit.tau).unwrap();
        let total: f64 = w.weights.iter().sum();
        // tolerance on the mean-one weight scale
        prop_assert!(eval.score.amax() * c.n() as f64 / total <= 1e-8);
        prop_assert!(eval.info.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn cox_weight_scale_invariance(seed in 0u64..10_000, exponent in -8i32..8) {
        let c = random_cohort(seed, 80, 3, 1);
        let ps = fit_multinomial_logit(&c).unwrap();
        let w = compute_weights(&ps, c.treatment(), WeightScheme::Ipw).unwrap();
        let a = fit_mhr(&c, &w.weights).unwrap();
        let b = fit_mhr(&c, &w.scaled(2f64.powi(exponent)).weights).unwrap();
        prop_assert_eq!(&a.tau, &b.tau);
        prop_assert_eq!(a.iterations, b.iterations);
        let odd = fit_mhr(&c, &w.scaled(3.7).weights).unwrap();
        prop_assert!((&a.tau - &odd.tau).amax() < 1e-10);
    }

    #[test]
    fn km_weight_scale_invariance(seed in 0u64..10_000, exponent in -8i32..8) {
        let c = random_cohort(seed, 50, 2, 1);
        let w: Vec<f64> = (0..c.n()).map(|i| 0.5 + (i % 5) as f64 * 0.3).collect();
        let scaled: Vec<f64> = w.iter().map(|v| v * 2f64.powi(exponent)).collect();
        for g in 0..2 {
            let a = weighted_km(&c, &w, g).unwrap();
            let b = weighted_km(&c, &scaled, g).unwrap();
            prop_assert_eq!(&a.survival, &b.survival);
            prop_assert_eq!(&a.event_times, &b.event_times);
        }
    }

    #[test]
    fn km_steps_only_at_events(seed in 0u64..10_000) {
        let c = random_cohort(seed, 50, 2, 1);
        let w = vec![1.0; c.n()];
        for g in 0..2 {
            let curve = weighted_km(&c, &w, g).unwrap();
            for i in 0..c.n() {
                if c.treatment()[i] == g && !c.event()[i] {
                    let t = c.time()[i];
                    if !curve.event_times.contains(&t) {
                        // censoring leaves the curve flat across its time
                        prop_assert_eq!(curve.survival_at(t), curve.survival_at(t - 1e-9));
                    }
                }
            }
            prop_assert!(curve.survival.windows(2).all(|s| s[1] <= s[0]));
        }
    }

    #[test]
    fn factorial_cohort_is_the_four_level_fit(seed in 0u64..10_000) {
        let base = random_cohort(seed, 160, 4, 2);
        let z1: Vec<f64> = base.treatment().iter().map(|&z| f64::from(FactorialCoding::decode(z).unwrap().0)).collect();
        let z2: Vec<f64> = base.treatment().iter().map(|&z| f64::from(FactorialCoding::decode(z).unwrap().1)).collect();
        let codes = encode_factorial(&z1, &z2).unwrap();
        prop_assert_eq!(codes.as_slice(), base.treatment());
        let relabeled = base.clone().with_treatment_labels(FactorialCoding::labels()).unwrap();
        let ps_a = fit_multinomial_logit(&base).unwrap();
        let ps_b = fit_multinomial_logit(&relabeled).unwrap();
        let wa = compute_weights(&ps_a, base.treatment(), WeightScheme::Overlap).unwrap();
        let wb = compute_weights(&ps_b, relabeled.treatment(), WeightScheme::Overlap).unwrap();
        let a = fit_mhr(&base, &wa.weights).unwrap();
        let b = fit_mhr(&relabeled, &wb.weights).unwrap();
        prop_assert_eq!(&a.tau, &b.tau);
        prop_assert_eq!(b.contrast_labels, vec!["(1,0)", "(0,1)", "(1,1)"]);
    }

    #[test]
    fn unit_weight_mhr_is_the_indicator_cox_fit(seed in 0u64..10_000) {
        let c = random_cohort(seed, 60, 3, 1);
        let design = nalgebra::DMatrix::from_fn(c.n(), 2, |i, k| f64::from(u8::from(c.treatment()[i] == k + 1)));
        let general = fit_cox(c.time(), c.event(), &vec![1.0; c.n()], &design).unwrap();
        let mhr = fit_mhr(&c, &vec![1.0; c.n()]).unwrap();
        prop_assert!((&general.beta - &mhr.tau).amax() < 1e-7);
    }
}
