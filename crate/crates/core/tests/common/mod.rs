#![allow(dead_code)]

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use wcox_core::Cohort;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random cohort with `levels` groups, `p` covariates, roughly 30% censoring
/// and a share of tied times.
pub fn random_cohort(seed: u64, n: usize, levels: usize, p: usize) -> Cohort {
    let mut r = rng(seed);
    loop {
        let x = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut r) });
        let z: Vec<usize> = (0..n).map(|i| if i < levels { i } else { r.gen_range(0..levels) }).collect();
        let mut time = Vec::with_capacity(n);
        let mut event = Vec::with_capacity(n);
        for i in 0..n {
            let eta: f64 = 0.3 * z[i] as f64 - 0.2 * f64::from(u8::from(z[i] == 2)) + 0.4 * x.row(i).sum();
            let t: f64 = Exp1.sample(&mut r);
            let t = t / eta.exp();
            let c: f64 = Exp1.sample(&mut r);
            let c = 2.5 * c;
            let mut y = t.min(c);
            if r.gen_bool(0.3) {
                y = (y * 4.0).round() / 4.0 + 0.25;
            }
            time.push(y);
            event.push(t <= c);
        }
        let events_per_group = (0..levels).all(|g| (0..n).any(|i| z[i] == g && event[i]));
        if events_per_group {
            return Cohort::new(time, event, z, x).unwrap();
        }
    }
}

struct Objective<F: Fn(&[f64]) -> f64>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

/// Derivative-free minimization: Nelder-Mead restarted from the best vertex
/// with a shrinking initial simplex.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: Vec<f64>) -> Vec<f64> {
    let mut best = start;
    // Absolute tolerance on the spread of vertex values, near the rounding
    // floor of the objective.
    let tol = 2e-15 * f(&best).abs().max(1.0);
    for step in [0.5, 0.02, 1e-3, 1e-4] {
        let mut simplex = vec![best.clone()];
        for k in 0..best.len() {
            let mut v = best.clone();
            v[k] += step;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(tol).unwrap();
        let res = Executor::new(Objective(&f), solver)
            .configure(|s| s.max_iters(20_000))
            .run()
            .unwrap();
        best = res.state().get_best_param().unwrap().clone();
    }
    best
}

/// Breslow weighted log partial likelihood, summed directly over risk sets.
pub fn brute_loglik(cohort: &Cohort, w: &[f64], tau: &[f64]) -> f64 {
    let eta = |i: usize| match cohort.treatment()[i] {
        0 => 0.0,
        g => tau[g - 1],
    };
    let (t, d) = (cohort.time(), cohort.event());
    let mut ll = 0.0;
    for i in 0..cohort.n() {
        if !d[i] {
            continue;
        }
        let s0: f64 = (0..cohort.n()).filter(|&l| t[l] >= t[i]).map(|l| w[l] * eta(l).exp()).sum();
        ll += w[i] * (eta(i) - s0.ln());
    }
    ll
}

/// Multinomial logit log-likelihood with an intercept, from the softmax
/// definition. `theta` holds one row of `p + 1` coefficients per non-reference level.
pub fn brute_logit_loglik(x: &DMatrix<f64>, z: &[usize], levels: usize, theta: &[f64]) -> f64 {
    let q = x.ncols() + 1;
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let mut eta = vec![0.0; levels];
        for j in 1..levels {
            let c = &theta[(j - 1) * q..j * q];
            eta[j] = c[0] + (0..x.ncols()).map(|k| c[k + 1] * x[(i, k)]).sum::<f64>();
        }
        let denom: f64 = eta.iter().map(|e| e.exp()).sum();
        ll += eta[z[i]] - denom.ln();
    }
    ll
}

/// Largest |tau_hat - tau_oracle| for a unit-weight fit on cohort `seed`.
pub fn cox_vs_bruteforce(seed: u64) -> f64 {
    let n = 20 + (seed as usize * 7) % 41;
    let levels = 2 + (seed as usize) % 2;
    let c = random_cohort(seed, n, levels, 1);
    let w = vec![1.0; n];
    let fit = wcox_core::fit_mhr(&c, &w).unwrap();
    let oracle = nelder_mead(|t| -brute_loglik(&c, &w, t), vec![0.0; levels - 1]);
    fit.tau.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Largest coefficient difference between the Newton fit and a
/// derivative-free maximization of the multinomial likelihood.
pub fn logit_vs_bruteforce(seed: u64) -> f64 {
    let mut r = rng(seed + 10_000);
    let n = 80 + (seed as usize * 13) % 120;
    let levels = 2 + (seed as usize) % 2;
    let p = 1 + (seed as usize / 2) % 2;
    let x = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut r) });
    let z: Vec<usize> = (0..n)
        .map(|i| {
            if i < levels {
                return i;
            }
            let eta: Vec<f64> = (0..levels).map(|j| 0.6 * j as f64 * x[(i, 0)] - 0.2 * j as f64).collect();
            let total: f64 = eta.iter().map(|e| e.exp()).sum();
            let u: f64 = r.gen::<f64>() * total;
            let mut acc = 0.0;
            for (j, e) in eta.iter().enumerate() {
                acc += e.exp();
                if u < acc {
                    return j;
                }
            }
            levels - 1
        })
        .collect();
    let c = Cohort::new(vec![1.0; n], vec![true; n], z.clone(), x.clone()).unwrap();
    let fit = wcox_core::fit_multinomial_logit(&c).unwrap();
    let newton = wcox_core::propensity::gamma_to_vec(&fit.gamma);
    let oracle = nelder_mead(|t| -brute_logit_loglik(&x, &z, levels, t), vec![0.0; newton.len()]);
    newton.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Weighted KM recomputed per group from the product-limit formula. Weights
/// are multiples of 1/8 so every sum is exact whatever the order.
pub fn km_matches_formula(seed: u64) -> bool {
    let mut r = rng(seed + 20_000);
    let n = 5 + (seed as usize) % 40;
    let c = random_cohort(seed + 20_000, n, 2, 1);
    let w: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(1u8..=16)) / 8.0).collect();
    (0..c.levels()).all(|g| {
        let curve = wcox_core::weighted_km(&c, &w, g).unwrap();
        let mut times: Vec<f64> = (0..n)
            .filter(|&i| c.treatment()[i] == g && c.event()[i])
            .map(|i| c.time()[i])
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut s = 1.0;
        let mut surv = Vec::new();
        for &t in &times {
            let in_group = |i: &usize| c.treatment()[*i] == g;
            let d: f64 = (0..n).filter(in_group).filter(|&i| c.time()[i] == t && c.event()[i]).map(|i| w[i]).sum();
            let at_risk: f64 = (0..n).filter(in_group).filter(|&i| c.time()[i] >= t).map(|i| w[i]).sum();
            s *= 1.0 - d / at_risk;
            surv.push(s);
        }
        curve.event_times == times && curve.survival == surv
    })
}

/// Root of the four-unit score equation 1 = 2r/(r+1) + r/(r+2), found by bisection.
pub fn worked_example_oracle() -> f64 {
    let f = |r: f64| 1.0 - 2.0 * r / (r + 1.0) - r / (r + 2.0);
    let (mut lo, mut hi) = (0.1f64, 2.0f64);
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

pub fn worked_example_fit() -> f64 {
    let c = Cohort::new(
        vec![1.0, 2.0, 3.0, 4.0],
        vec![true; 4],
        vec![1, 0, 0, 1],
        DMatrix::zeros(4, 0),
    )
    .unwrap();
    wcox_core::fit_mhr(&c, &[1.0; 4]).unwrap().tau[0]
}

pub struct SandwichCheck {
    /// Largest per-block relative discrepancy between `n * A_hat` and the
    /// negative central-difference Jacobian.
    pub jacobian_rel: f64,
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
}

/// Scheme rotated by seed over IPW, overlap and treated-group weights.
pub fn sandwich_check(seed: u64) -> SandwichCheck {
    use wcox_core::cox::{stacked_estimating_function, SurvivalView};
    use wcox_core::propensity::{gamma_to_vec, vec_to_gamma, WeightScheme};

    let levels = 2 + (seed as usize) % 3;
    let n = 120 + (seed as usize * 11) % 100;
    let c = random_cohort(seed + 30_000, n, levels, 2);
    let scheme = match seed % 3 {
        0 => WeightScheme::Ipw,
        1 => WeightScheme::Overlap,
        _ => WeightScheme::Att(1),
    };
    let ps = wcox_core::fit_multinomial_logit(&c).unwrap();
    let w = wcox_core::compute_weights(&ps, c.treatment(), scheme).unwrap();
    let est = wcox_core::fit_mhr(&c, &w.weights).unwrap();
    let sw = wcox_core::sandwich_covariance(&c, Some(&ps), scheme, &est.tau).unwrap();

    let j = c.contrasts();
    let theta0: Vec<f64> = est.tau.iter().chain(gamma_to_vec(&ps.gamma).iter()).copied().collect();
    let dim = theta0.len();
    let data = SurvivalView::from_cohort(&c);
    let eval = |theta: &[f64]| {
        let tau = nalgebra::DVector::from_column_slice(&theta[..j]);
        let gamma = vec_to_gamma(&nalgebra::DVector::from_column_slice(&theta[j..]), j);
        stacked_estimating_function(data, &ps.design, scheme, &tau, &gamma).unwrap()
    };
    let h = 1e-5;
    let mut jac = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut up = theta0.clone();
        let mut down = theta0.clone();
        up[k] += h;
        down[k] -= h;
        let col = (eval(&up) - eval(&down)) / (2.0 * h);
        jac.set_column(k, &col);
    }
    let target = -jac / n as f64;
    let blocks = [(0, 0, j, j), (0, j, j, dim - j), (j, 0, dim - j, j), (j, j, dim - j, dim - j)];
    let mut worst = 0.0f64;
    for (r0, c0, nr, nc) in blocks {
        let a = sw.a_hat.view((r0, c0), (nr, nc));
        let b = target.view((r0, c0), (nr, nc));
        let scale = b.amax().max(a.amax());
        if scale > 0.0 {
            worst = worst.max((a - b).amax() / scale);
        }
    }
    let cov = &sw.cov_tau;
    SandwichCheck {
        jacobian_rel: worst,
        asymmetry: (cov - cov.transpose()).amax(),
        min_eigenvalue: cov.clone().symmetric_eigen().eigenvalues.min(),
    }
}

/// Largest spread of weighted covariate means across groups.
pub fn weighted_mean_gap(report: &wcox_core::BalanceReport) -> f64 {
    let mut by_cov: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for m in &report.moments {
        by_cov.entry(&m.covariate).or_default().push(m.weighted_mean);
    }
    by_cov
        .values()
        .map(|v| {
            let hi = v.iter().cloned().fold(f64::MIN, f64::max);
            let lo = v.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max)
}
