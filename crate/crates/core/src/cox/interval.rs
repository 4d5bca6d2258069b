use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HazardRatioInterval {
    pub hr: f64,
    pub low: f64,
    pub high: f64,
}

/// Two-sided normal quantile for coverage `level`, e.g. 1.959964 for 0.95.
pub fn normal_quantile(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// `exp(tau +/- z * se)` intervals from the diagonal of `cov_tau`.
pub fn confidence_intervals(tau: &DVector<f64>, cov_tau: &DMatrix<f64>, level: f64) -> Vec<HazardRatioInterval> {
    let z = normal_quantile(level);
    tau.iter()
        .enumerate()
        .map(|(k, &t)| {
            let se = cov_tau[(k, k)].max(0.0).sqrt();
            HazardRatioInterval {
                hr: t.exp(),
                low: (t - z * se).exp(),
                high: (t + z * se).exp(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(tau: f64, se: f64) -> HazardRatioInterval {
        confidence_intervals(&DVector::from_vec(vec![tau]), &DMatrix::from_element(1, 1, se * se), 0.95)[0]
    }

    #[test]
    fn degenerate_interval() {
        let c = one(0.0, 0.0);
        assert_eq!((c.hr, c.low, c.high), (1.0, 1.0, 1.0));
    }

    #[test]
    fn interval_from_log_scale() {
        let c = one(0.417, 0.065);
        assert!((c.hr - 1.52).abs() < 0.005);
        assert!((c.low - 1.34).abs() < 0.01);
        assert!((c.high - 1.73).abs() < 0.01);
    }

    #[test]
    fn asymmetric_about_hr() {
        for se in [0.01, 0.1, 0.5] {
            let c = one(-0.3, se);
            assert!(c.high - c.hr > c.hr - c.low);
        }
    }

    #[test]
    fn quantile_value() {
        assert!((normal_quantile(0.95) - 1.959963984540054).abs() < 1e-9);
    }
}
