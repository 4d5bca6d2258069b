//! Balancing weights `w_i = h(X_i) / e_{i, Z_i}` for a chosen tilting function.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propensity::PropensityFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Overall population, `h = 1`.
    Ipw,
    /// Population receiving the given level, `h = e_{j'}`.
    Att(usize),
    /// Overlap population, `h = (sum_k 1/e_k)^-1`.
    Overlap,
    /// No weighting.
    Unit,
}

impl WeightScheme {
    /// Tilting function evaluated at one unit's propensity row.
    pub fn tilt(&self, e: &[f64]) -> f64 {
        match *self {
            WeightScheme::Ipw | WeightScheme::Unit => 1.0,
            WeightScheme::Att(j) => e[j],
            WeightScheme::Overlap => 1.0 / e.iter().map(|v| 1.0 / v).sum::<f64>(),
        }
    }

    /// Weight for a unit observed in `group`.
    pub fn weight(&self, e: &[f64], group: usize) -> f64 {
        match self {
            WeightScheme::Unit => 1.0,
            _ => self.tilt(e) / e[group],
        }
    }

    /// Derivative of `log w` with respect to the logit of level `j >= 1`,
    /// per unit of the design row (the full gradient is this times `x_i`).
    pub(crate) fn dlog_weight(&self, e: &[f64], group: usize, j: usize) -> f64 {
        let own = f64::from(u8::from(group == j)) - e[j];
        let tilt = match *self {
            WeightScheme::Unit => return 0.0,
            WeightScheme::Ipw => 0.0,
            WeightScheme::Att(jp) => f64::from(u8::from(jp == j)) - e[j],
            WeightScheme::Overlap => self.tilt(e) / e[j] - e[j],
        };
        tilt - own
    }

    pub fn needs_propensity(&self) -> bool {
        !matches!(self, WeightScheme::Unit)
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Ipw => write!(f, "ipw"),
            WeightScheme::Att(j) => write!(f, "att:{j}"),
            WeightScheme::Overlap => write!(f, "ow"),
            WeightScheme::Unit => write!(f, "unit"),
        }
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    /// Parses `ipw`, `ow`, `unit` or `att:<level index>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ipw" => Ok(WeightScheme::Ipw),
            "ow" | "overlap" => Ok(WeightScheme::Overlap),
            "unit" | "none" => Ok(WeightScheme::Unit),
            other => other
                .strip_prefix("att:")
                .and_then(|j| j.parse().ok())
                .map(WeightScheme::Att)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown weight scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSet {
    pub scheme: WeightScheme,
    pub weights: Vec<f64>,
    pub tilt: Vec<f64>,
    pub trimmed_ids: Option<Vec<usize>>,
    pub threshold: Option<f64>,
}

impl WeightSet {
    pub fn unit(n: usize) -> Self {
        Self {
            scheme: WeightScheme::Unit,
            weights: vec![1.0; n],
            tilt: vec![1.0; n],
            trimmed_ids: None,
            threshold: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * c).collect(),
            ..self.clone()
        }
    }
}

/// Weights from an `n x (J+1)` probability matrix.
pub fn weights_from_probs(
    probs: &DMatrix<f64>,
    treatment: &[usize],
    scheme: WeightScheme,
) -> Result<WeightSet> {
    let n = treatment.len();
    if scheme == WeightScheme::Unit {
        return Ok(WeightSet::unit(n));
    }
    if probs.nrows() != n {
        return Err(Error::InvalidArgument("propensity rows do not match treatment".into()));
    }
    if let WeightScheme::Att(j) = scheme {
        if j >= probs.ncols() {
            return Err(Error::InvalidArgument(format!("ATT level {j} out of range")));
        }
    }
    let mut weights = Vec::with_capacity(n);
    let mut tilt = Vec::with_capacity(n);
    let mut row = vec![0.0; probs.ncols()];
    for (i, &z) in treatment.iter().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = probs[(i, j)];
            if !(*r > 0.0 && *r < 1.0) {
                return Err(Error::Positivity {
                    unit: i,
                    group: j,
                    value: *r,
                });
            }
        }
        let h = scheme.tilt(&row);
        tilt.push(h);
        weights.push(h / row[z]);
    }
    Ok(WeightSet {
        scheme,
        weights,
        tilt,
        trimmed_ids: None,
        threshold: None,
    })
}

pub fn compute_weights(
    fit: &PropensityFit,
    treatment: &[usize],
    scheme: WeightScheme,
) -> Result<WeightSet> {
    weights_from_probs(&fit.probs, treatment, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(e: &[f64], z: usize, scheme: WeightScheme) -> f64 {
        let probs = DMatrix::from_row_slice(1, e.len(), e);
        weights_from_probs(&probs, &[z], scheme).unwrap().weights[0]
    }

    #[test]
    fn symmetric_point() {
        assert_eq!(single(&[0.5, 0.5], 0, WeightScheme::Ipw), 2.0);
        assert!((single(&[0.5, 0.5], 0, WeightScheme::Overlap) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overlap_binary_reduces_to_other_propensity() {
        assert!((single(&[0.2, 0.8], 0, WeightScheme::Overlap) - 0.8).abs() < 1e-12);
        assert!((single(&[0.2, 0.8], 1, WeightScheme::Overlap) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn att_weight() {
        let w = single(&[0.1, 0.3, 0.6], 2, WeightScheme::Att(0));
        assert!((w - 0.1 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn positivity_violation() {
        let probs = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let err = weights_from_probs(&probs, &[1], WeightScheme::Ipw).unwrap_err();
        assert!(matches!(err, Error::Positivity { .. }));
        assert!(weights_from_probs(&probs, &[1], WeightScheme::Unit).is_ok());
    }

    #[test]
    fn parse_schemes() {
        assert_eq!("IPW".parse::<WeightScheme>().unwrap(), WeightScheme::Ipw);
        assert_eq!("ow".parse::<WeightScheme>().unwrap(), WeightScheme::Overlap);
        assert_eq!("att:2".parse::<WeightScheme>().unwrap(), WeightScheme::Att(2));
        assert!("att:x".parse::<WeightScheme>().is_err());
        for s in [WeightScheme::Ipw, WeightScheme::Att(1), WeightScheme::Overlap, WeightScheme::Unit] {
            assert_eq!(s.to_string().parse::<WeightScheme>().unwrap(), s);
        }
    }

    #[test]
    fn dlog_weight_matches_finite_difference() {
        // Propensities from logits (0, a1, a2); perturb a_j and difference log w.
        let logits = [0.0, 0.4, -0.9];
        let probs_of = |l: &[f64]| {
            let m = l.iter().cloned().fold(f64::MIN, f64::max);
            let ex: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = ex.iter().sum();
            ex.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let e = probs_of(&logits);
        for scheme in [WeightScheme::Ipw, WeightScheme::Att(0), WeightScheme::Att(2), WeightScheme::Overlap] {
            for group in 0..3 {
                for j in 1..3 {
                    let h = 1e-6;
                    let mut up = logits;
                    up[j] += h;
                    let mut dn = logits;
                    dn[j] -= h;
                    let fd = (scheme.weight(&probs_of(&up), group).ln()
                        - scheme.weight(&probs_of(&dn), group).ln())
                        / (2.0 * h);
                    let an = scheme.dlog_weight(&e, group, j);
                    assert!((fd - an).abs() < 1e-7, "{scheme} g{group} j{j}: {fd} vs {an}");
                }
            }
        }
    }
}
