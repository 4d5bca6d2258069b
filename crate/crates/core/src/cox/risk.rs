//! Weighted risk-set processes and the partial-likelihood score for
//! treatment-indicator designs.
//!
//! Risk sets use the `Y_l >= Y_i` convention; tied event times share one risk
//! set (Breslow).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Units ordered by decreasing observed time, grouped into tie blocks.
#[derive(Debug, Clone)]
pub struct RiskSetOrder {
    order: Vec<usize>,
    /// `blocks[b]..blocks[b+1]` indexes `order` for the b-th distinct time.
    blocks: Vec<usize>,
}

impl RiskSetOrder {
    pub fn new(time: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut blocks = Vec::new();
        let mut prev = f64::NAN;
        for (pos, &i) in order.iter().enumerate() {
            if time[i] != prev {
                blocks.push(pos);
                prev = time[i];
            }
        }
        blocks.push(order.len());
        Self { order, blocks }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Tie blocks in decreasing time order.
    pub fn blocks(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.blocks.windows(2).map(move |w| &self.order[w[0]..w[1]])
    }
}

/// Borrowed survival columns with dense treatment labels in `0..levels`.
#[derive(Debug, Clone, Copy)]
pub struct SurvivalView<'a> {
    pub time: &'a [f64],
    pub event: &'a [bool],
    pub group: &'a [usize],
    pub levels: usize,
}

impl<'a> SurvivalView<'a> {
    pub fn from_cohort(c: &'a crate::data::Cohort) -> Self {
        Self {
            time: c.time(),
            event: c.event(),
            group: c.treatment(),
            levels: c.levels(),
        }
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn contrasts(&self) -> usize {
        self.levels - 1
    }
}

/// Risk-set sums at a single time, normalized by `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskProcesses {
    pub s0: f64,
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
    pub dbar: DVector<f64>,
}

/// `S0`, `S1`, `S2` and `Dbar` at time `t` by direct summation.
pub fn risk_processes(data: SurvivalView<'_>, weights: &[f64], tau: &DVector<f64>, t: f64) -> RiskProcesses {
    let j = data.contrasts();
    let n = data.n() as f64;
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(j);
    for i in 0..data.n() {
        if data.time[i] >= t {
            let g = data.group[i];
            let r = weights[i] * if g > 0 { tau[g - 1].exp() } else { 1.0 };
            s0 += r;
            if g > 0 {
                s1[g - 1] += r;
            }
        }
    }
    s0 /= n;
    s1 /= n;
    let s2 = DMatrix::from_diagonal(&s1);
    let dbar = if s0 > 0.0 { &s1 / s0 } else { DVector::zeros(j) };
    RiskProcesses { s0, s1, s2, dbar }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEval {
    pub score: DVector<f64>,
    pub loglik: f64,
    pub info: DMatrix<f64>,
}

/// Weighted partial-likelihood score, log-likelihood and information.
pub fn evaluate_score(
    data: SurvivalView<'_>,
    weights: &[f64],
    tau: &DVector<f64>,
) -> Result<ScoreEval> {
    let order = RiskSetOrder::new(data.time);
    evaluate_score_ordered(data, &order, weights, tau)
}

pub fn evaluate_score_ordered(
    data: SurvivalView<'_>,
    order: &RiskSetOrder,
    weights: &[f64],
    tau: &DVector<f64>,
) -> Result<ScoreEval> {
    let j = data.contrasts();
    if tau.len() != j || weights.len() != data.n() {
        return Err(Error::InvalidArgument("dimension mismatch in score evaluation".into()));
    }
    if !data.event.iter().any(|&d| d) {
        return Err(Error::NoEvents);
    }
    let mut rel = vec![1.0; data.levels];
    for k in 0..j {
        rel[k + 1] = tau[k].exp();
    }
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; j];
    let mut score = DVector::zeros(j);
    let mut info = DMatrix::zeros(j, j);
    let mut loglik = 0.0;
    let mut dbar = vec![0.0; j];
    for block in order.blocks() {
        for &i in block {
            let g = data.group[i];
            let r = weights[i] * rel[g];
            s0 += r;
            if g > 0 {
                s1[g - 1] += r;
            }
        }
        let mut w_events = 0.0;
        for &i in block {
            if data.event[i] {
                let w = weights[i];
                w_events += w;
                let g = data.group[i];
                if g > 0 {
                    score[g - 1] += w;
                    loglik += w * tau[g - 1];
                }
            }
        }
        if w_events == 0.0 {
            continue;
        }
        assert!(s0 > 0.0, "empty weighted risk set at an event time");
        for k in 0..j {
            dbar[k] = s1[k] / s0;
        }
        loglik -= w_events * s0.ln();
        for a in 0..j {
            score[a] -= w_events * dbar[a];
            info[(a, a)] += w_events * dbar[a];
            for b in 0..j {
                info[(a, b)] -= w_events * dbar[a] * dbar[b];
            }
        }
    }
    Ok(ScoreEval { score, loglik, info })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_units() -> (Vec<f64>, Vec<bool>, Vec<usize>) {
        (vec![1.0, 2.0, 3.0, 4.0], vec![true; 4], vec![1, 0, 0, 1])
    }

    #[test]
    fn hand_evaluated_score() {
        let (t, d, z) = four_units();
        let view = SurvivalView { time: &t, event: &d, group: &z, levels: 2 };
        let e = evaluate_score(view, &[1.0; 4], &DVector::zeros(1)).unwrap();
        assert!((e.score[0] - (-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn score_scales_with_weights() {
        let (t, d, z) = four_units();
        let view = SurvivalView { time: &t, event: &d, group: &z, levels: 2 };
        let w = [0.7, 1.3, 2.0, 0.4];
        let w2: Vec<f64> = w.iter().map(|v| v * 3.7).collect();
        let tau = DVector::from_vec(vec![0.3]);
        let a = evaluate_score(view, &w, &tau).unwrap();
        let b = evaluate_score(view, &w2, &tau).unwrap();
        assert!((b.score[0] - 3.7 * a.score[0]).abs() < 1e-13);
    }

    #[test]
    fn ties_share_risk_set() {
        // two events at t=1 (groups 0 and 1), one censored at t=1
        let t = [1.0, 1.0, 1.0, 2.0];
        let d = [true, true, false, true];
        let z = [0, 1, 1, 0];
        let view = SurvivalView { time: &t, event: &d, group: &z, levels: 2 };
        let e = evaluate_score(view, &[1.0; 4], &DVector::zeros(1)).unwrap();
        // risk set at 1: all four units, dbar = 2/4; at 2: unit 3 only, dbar = 0
        let expect = (0.0 - 0.5) + (1.0 - 0.5) + (0.0 - 0.0);
        assert!((e.score[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn all_censored_is_error() {
        let t = [1.0, 2.0];
        let d = [false, false];
        let z = [0, 1];
        let view = SurvivalView { time: &t, event: &d, group: &z, levels: 2 };
        assert_eq!(evaluate_score(view, &[1.0; 2], &DVector::zeros(1)).unwrap_err(), Error::NoEvents);
    }

    #[test]
    fn risk_processes_invariants() {
        let t = [1.0, 2.0, 3.0, 4.0, 5.0];
        let z = [0, 1, 2, 1, 2];
        let d = [true; 5];
        let view = SurvivalView { time: &t, event: &d, group: &z, levels: 3 };
        let rp = risk_processes(view, &[0.5, 1.0, 2.0, 0.3, 1.1], &DVector::from_vec(vec![0.2, -0.4]), 2.0);
        assert!(rp.s0 > 0.0);
        assert!(rp.dbar.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(rp.s2, rp.s2.transpose());
    }
}
