//! Cohort representation, treatment coding and input validation.
//!
//! A [`Cohort`] holds one record per unit: observed time, event flag,
//! a dense treatment label in `0..=J` (0 is the reference level) and an
//! `n x p` covariate matrix without intercept column.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One parsed input row before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub time: f64,
    pub event: f64,
    pub treatment: String,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationOptions {
    /// Treatment label to place at index 0.
    pub reference: Option<String>,
    pub covariate_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    time: Vec<f64>,
    event: Vec<bool>,
    treatment: Vec<usize>,
    covariates: DMatrix<f64>,
    covariate_names: Vec<String>,
    treatment_labels: Vec<String>,
}

impl Cohort {
    /// Builds a cohort from already-coded columns, checking every invariant.
    pub fn new(
        time: Vec<f64>,
        event: Vec<bool>,
        treatment: Vec<usize>,
        covariates: DMatrix<f64>,
    ) -> Result<Self> {
        let levels = treatment.iter().copied().max().map_or(0, |m| m + 1);
        let labels = (0..levels).map(|j| j.to_string()).collect();
        let names = (1..=covariates.ncols()).map(|k| format!("x{k}")).collect();
        Self::with_labels(time, event, treatment, covariates, names, labels)
    }

    pub fn with_labels(
        time: Vec<f64>,
        event: Vec<bool>,
        treatment: Vec<usize>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
        treatment_labels: Vec<String>,
    ) -> Result<Self> {
        let n = time.len();
        if event.len() != n || treatment.len() != n || covariates.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "column lengths differ: time {n}, event {}, treatment {}, covariates {}",
                event.len(),
                treatment.len(),
                covariates.nrows()
            )));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(Error::InvalidArgument(
                "covariate name count does not match matrix width".into(),
            ));
        }
        let bad: Vec<usize> = time
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.is_finite())
            .map(|(i, _)| i + 1)
            .collect();
        if !bad.is_empty() {
            return Err(Error::validation(
                format!("non-finite time at rows {}", join_rows(&bad)),
                bad,
            ));
        }
        if let Some(i) = time.iter().position(|&t| t < 0.0) {
            return Err(Error::validation(format!("negative time at row {}", i + 1), vec![i + 1]));
        }
        let bad: Vec<usize> = (0..n)
            .filter(|&i| covariates.row(i).iter().any(|v| !v.is_finite()))
            .map(|i| i + 1)
            .collect();
        if !bad.is_empty() {
            return Err(Error::validation(
                format!("non-finite covariate at rows {}", join_rows(&bad)),
                bad,
            ));
        }
        let levels = treatment_labels.len();
        if let Some(i) = treatment.iter().position(|&z| z >= levels) {
            return Err(Error::validation(
                format!("treatment label {} out of range at row {}", treatment[i], i + 1),
                vec![i + 1],
            ));
        }
        let mut counts = vec![0usize; levels];
        for &z in &treatment {
            counts[z] += 1;
        }
        if levels < 2 || counts.iter().filter(|&&c| c > 0).count() < 2 {
            return Err(Error::validation("treatment has a single level", vec![]));
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::validation(
                format!("treatment level '{}' has no units", treatment_labels[j]),
                vec![],
            ));
        }
        Ok(Self {
            time,
            event,
            treatment,
            covariates,
            covariate_names,
            treatment_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    /// Number of treatment levels, `J + 1`.
    pub fn levels(&self) -> usize {
        self.treatment_labels.len()
    }

    /// Number of non-reference contrasts `J`.
    pub fn contrasts(&self) -> usize {
        self.levels() - 1
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn treatment(&self) -> &[usize] {
        &self.treatment
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treatment_labels(&self) -> &[String] {
        &self.treatment_labels
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&d| d).count()
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.levels()];
        for &z in &self.treatment {
            counts[z] += 1;
        }
        counts
    }

    pub fn with_treatment_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.levels() {
            return Err(Error::InvalidArgument(format!(
                "expected {} treatment labels, got {}",
                self.levels(),
                labels.len()
            )));
        }
        self.treatment_labels = labels;
        Ok(self)
    }

    /// Cohort restricted to (or resampled by) `idx`; indices may repeat.
    ///
    /// Fails if a treatment level ends up empty.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let p = self.p();
        let covariates = DMatrix::from_fn(idx.len(), p, |r, c| self.covariates[(idx[r], c)]);
        Self::with_labels(
            idx.iter().map(|&i| self.time[i]).collect(),
            idx.iter().map(|&i| self.event[i]).collect(),
            idx.iter().map(|&i| self.treatment[i]).collect(),
            covariates,
            self.covariate_names.clone(),
            self.treatment_labels.clone(),
        )
    }

    /// Rows in the form accepted by [`validate_cohort`].
    pub fn to_records(&self) -> Vec<RawRecord> {
        (0..self.n())
            .map(|i| RawRecord {
                time: self.time[i],
                event: if self.event[i] { 1.0 } else { 0.0 },
                treatment: self.treatment_labels[self.treatment[i]].clone(),
                covariates: self.covariates.row(i).iter().copied().collect(),
            })
            .collect()
    }
}

fn join_rows(rows: &[usize]) -> String {
    const SHOWN: usize = 10;
    let mut s: Vec<String> = rows.iter().take(SHOWN).map(|r| r.to_string()).collect();
    if rows.len() > SHOWN {
        s.push(format!("... ({} total)", rows.len()));
    }
    s.join(", ")
}

/// Assigns dense indices to treatment labels.
///
/// The reference (if given) gets index 0. When every label parses as an
/// integer the remaining labels are ordered numerically, otherwise by first
/// appearance.
fn code_labels(labels: &[&str], reference: Option<&str>) -> Result<Vec<String>> {
    let mut seen: Vec<String> = Vec::new();
    for &l in labels {
        if !seen.iter().any(|s| s == l) {
            seen.push(l.to_string());
        }
    }
    if seen.iter().all(|s| s.trim().parse::<i64>().is_ok()) {
        seen.sort_by_key(|s| s.trim().parse::<i64>().unwrap());
    }
    if let Some(r) = reference {
        let pos = seen
            .iter()
            .position(|s| s == r)
            .ok_or_else(|| Error::validation(format!("reference level '{r}' not found"), vec![]))?;
        let r = seen.remove(pos);
        seen.insert(0, r);
    }
    Ok(seen)
}

/// Validates parsed rows and produces a [`Cohort`].
///
/// Row numbers in error messages are 1-based data rows.
pub fn validate_cohort(rows: &[RawRecord], opts: &ValidationOptions) -> Result<Cohort> {
    if rows.is_empty() {
        return Err(Error::validation("no rows", vec![]));
    }
    let p = rows[0].covariates.len();
    let ragged: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.covariates.len() != p)
        .map(|(i, _)| i + 1)
        .collect();
    if !ragged.is_empty() {
        return Err(Error::validation(
            format!("inconsistent covariate count at rows {}", join_rows(&ragged)),
            ragged,
        ));
    }
    let missing: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            !r.time.is_finite()
                || !r.event.is_finite()
                || r.treatment.trim().is_empty()
                || r.covariates.iter().any(|v| !v.is_finite())
        })
        .map(|(i, _)| i + 1)
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(
            format!("missing or non-finite values at rows {}", join_rows(&missing)),
            missing,
        ));
    }
    if let Some(i) = rows.iter().position(|r| r.time < 0.0) {
        return Err(Error::validation(format!("negative time at row {}", i + 1), vec![i + 1]));
    }
    let bad_event: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.event != 0.0 && r.event != 1.0)
        .map(|(i, _)| i + 1)
        .collect();
    if !bad_event.is_empty() {
        return Err(Error::validation(
            format!("event indicator not in {{0,1}} at rows {}", join_rows(&bad_event)),
            bad_event,
        ));
    }

    let raw_labels: Vec<&str> = rows.iter().map(|r| r.treatment.as_str()).collect();
    let labels = code_labels(&raw_labels, opts.reference.as_deref())?;
    if labels.len() < 2 {
        return Err(Error::validation("treatment has a single level", vec![]));
    }
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| (l.as_str(), j))
        .collect();
    let treatment = raw_labels.iter().map(|l| index[l]).collect();

    let names = if opts.covariate_names.len() == p {
        opts.covariate_names.clone()
    } else {
        (1..=p).map(|k| format!("x{k}")).collect()
    };
    let covariates = DMatrix::from_fn(rows.len(), p, |r, c| rows[r].covariates[c]);
    Cohort::with_labels(
        rows.iter().map(|r| r.time).collect(),
        rows.iter().map(|r| r.event == 1.0).collect(),
        treatment,
        covariates,
        names,
        labels,
    )
}

/// Two-way factorial cell coding: `(0,0)->0, (1,0)->1, (0,1)->2, (1,1)->3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorialCoding;

impl FactorialCoding {
    pub const CELLS: [(u8, u8); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

    pub fn encode(z1: u8, z2: u8) -> Result<usize> {
        match (z1, z2) {
            (0, 0) => Ok(0),
            (1, 0) => Ok(1),
            (0, 1) => Ok(2),
            (1, 1) => Ok(3),
            _ => Err(Error::InvalidArgument(format!(
                "factorial indicators must be binary, got ({z1},{z2})"
            ))),
        }
    }

    pub fn decode(label: usize) -> Option<(u8, u8)> {
        Self::CELLS.get(label).copied()
    }

    /// Display labels `"(z1,z2)"` in coded order.
    pub fn labels() -> Vec<String> {
        Self::CELLS
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect()
    }
}

/// Maps two binary columns onto the four-level treatment coding.
pub fn encode_factorial(z1: &[f64], z2: &[f64]) -> Result<Vec<usize>> {
    if z1.len() != z2.len() {
        return Err(Error::InvalidArgument("factorial columns differ in length".into()));
    }
    z1.iter()
        .zip(z2)
        .enumerate()
        .map(|(i, (&a, &b))| {
            let bin = |v: f64| (v == 0.0 || v == 1.0).then_some(v as u8);
            match (bin(a), bin(b)) {
                (Some(a), Some(b)) => FactorialCoding::encode(a, b),
                _ => Err(Error::validation(
                    format!("non-binary factorial indicator ({a},{b}) at row {}", i + 1),
                    vec![i + 1],
                )),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, d: f64, z: &str) -> RawRecord {
        RawRecord {
            time: t,
            event: d,
            treatment: z.into(),
            covariates: vec![],
        }
    }

    #[test]
    fn minimal_cohort() {
        let rows = vec![rec(1.0, 1.0, "0"), rec(2.0, 0.0, "1"), rec(3.0, 1.0, "0")];
        let c = validate_cohort(&rows, &ValidationOptions::default()).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.contrasts(), 1);
        assert_eq!(c.treatment(), &[0, 1, 0]);
    }

    #[test]
    fn negative_time_rejected() {
        let rows = vec![rec(-1.0, 1.0, "0"), rec(2.0, 0.0, "1")];
        let err = validate_cohort(&rows, &ValidationOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "validation error: negative time at row 1");
    }

    #[test]
    fn single_level_rejected() {
        let rows = vec![rec(1.0, 1.0, "0"), rec(2.0, 0.0, "0")];
        let err = validate_cohort(&rows, &ValidationOptions::default()).unwrap_err();
        assert!(err.to_string().contains("treatment has a single level"));
    }

    #[test]
    fn missing_values_list_rows() {
        let rows = vec![rec(1.0, 1.0, "a"), rec(f64::NAN, 0.0, "b"), rec(2.0, f64::NAN, "a")];
        match validate_cohort(&rows, &ValidationOptions::default()).unwrap_err() {
            Error::Validation { rows, .. } => assert_eq!(rows, vec![2, 3]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn string_labels_first_appearance_and_reference() {
        let rows = vec![rec(1.0, 1.0, "b"), rec(2.0, 0.0, "a"), rec(3.0, 1.0, "c")];
        let c = validate_cohort(&rows, &ValidationOptions::default()).unwrap();
        assert_eq!(c.treatment_labels(), &["b", "a", "c"]);
        let opts = ValidationOptions {
            reference: Some("c".into()),
            ..Default::default()
        };
        let c = validate_cohort(&rows, &opts).unwrap();
        assert_eq!(c.treatment_labels(), &["c", "b", "a"]);
        assert_eq!(c.treatment(), &[1, 2, 0]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let rows = vec![rec(1.0, 1.0, "2"), rec(2.0, 0.0, "10"), rec(3.0, 1.0, "0")];
        let c = validate_cohort(&rows, &ValidationOptions::default()).unwrap();
        assert_eq!(c.treatment_labels(), &["0", "2", "10"]);
    }

    #[test]
    fn validation_is_idempotent() {
        let rows = vec![
            RawRecord { time: 1.0, event: 1.0, treatment: "t".into(), covariates: vec![0.5] },
            RawRecord { time: 2.0, event: 0.0, treatment: "c".into(), covariates: vec![1.5] },
            RawRecord { time: 2.0, event: 1.0, treatment: "t".into(), covariates: vec![-1.0] },
        ];
        let opts = ValidationOptions { reference: Some("c".into()), covariate_names: vec!["age".into()] };
        let c = validate_cohort(&rows, &opts).unwrap();
        let again_opts = ValidationOptions {
            reference: Some(c.treatment_labels()[0].clone()),
            covariate_names: c.covariate_names().to_vec(),
        };
        let again = validate_cohort(&c.to_records(), &again_opts).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn factorial_coding() {
        assert_eq!(FactorialCoding::encode(0, 0).unwrap(), 0);
        assert_eq!(FactorialCoding::encode(1, 1).unwrap(), 3);
        assert!(FactorialCoding::encode(2, 0).is_err());
        for (label, &(a, b)) in FactorialCoding::CELLS.iter().enumerate() {
            assert_eq!(FactorialCoding::encode(a, b).unwrap(), label);
            assert_eq!(FactorialCoding::decode(label), Some((a, b)));
        }
        assert!(encode_factorial(&[2.0], &[0.0]).is_err());
        assert_eq!(encode_factorial(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1, 2]);
    }

    #[test]
    fn subset_with_missing_level_fails() {
        let c = Cohort::new(
            vec![1.0, 2.0, 3.0],
            vec![true, true, false],
            vec![0, 1, 0],
            DMatrix::zeros(3, 0),
        )
        .unwrap();
        assert!(c.subset(&[0, 2, 0]).is_err());
        assert_eq!(c.subset(&[1, 1, 0]).unwrap().treatment(), &[1, 1, 0]);
    }
}
