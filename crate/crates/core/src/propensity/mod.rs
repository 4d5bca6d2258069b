//! Generalized propensity scores, balancing weights, trimming and balance
//! diagnostics.

mod balance;
mod fit;
mod trim;
mod weights;

pub use balance::{balance_table, smd, weighted_moments, BalanceReport, GroupMoments, SmdEntry};
pub use fit::{
    design_matrix, fisher_information, fit_design, fit_multinomial_logit,
    fit_multinomial_logit_with, gamma_to_vec, log_likelihood, probabilities, score,
    score_contributions, vec_to_gamma, LogitOptions, PropensityFit,
};
pub use trim::{trim, TrimReport, Trimmed};
pub use weights::{compute_weights, weights_from_probs, WeightScheme, WeightSet};

use serde::Serialize;

/// One bin of the per-group propensity histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    /// Observed treatment group of the counted units.
    pub group: usize,
    /// Level whose propensity is binned.
    pub score_for: usize,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// Counts of `e_{i,j}` per observed group over equal-width bins on `[0, 1]`.
pub fn propensity_histogram(fit: &PropensityFit, treatment: &[usize], bins: usize) -> Vec<HistogramBin> {
    let levels = fit.probs.ncols();
    let mut counts = vec![0usize; levels * levels * bins];
    for (i, &g) in treatment.iter().enumerate() {
        for j in 0..levels {
            let b = ((fit.probs[(i, j)] * bins as f64) as usize).min(bins - 1);
            counts[(g * levels + j) * bins + b] += 1;
        }
    }
    let mut out = Vec::with_capacity(counts.len());
    for g in 0..levels {
        for j in 0..levels {
            for b in 0..bins {
                out.push(HistogramBin {
                    group: g,
                    score_for: j,
                    bin_low: b as f64 / bins as f64,
                    bin_high: (b + 1) as f64 / bins as f64,
                    count: counts[(g * levels + j) * bins + b],
                });
            }
        }
    }
    out
}
