//! CSV ingestion into a validated cohort.

use std::path::Path;

use wcox_core::data::{validate_cohort, Cohort, FactorialCoding, RawRecord, ValidationOptions};

use crate::CliError;

/// Which columns hold the analysis variables.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub time: String,
    pub event: String,
    pub treatment: Treatment,
    pub covariates: Vec<String>,
    pub reference: Option<String>,
}

#[derive(Debug, Clone)]
pub enum Treatment {
    Single(String),
    Factorial { z1: String, z2: String },
}

fn parse_number(s: &str) -> f64 {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return f64::NAN;
    }
    t.parse().unwrap_or(f64::NAN)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::Usage(format!("column '{name}' not found in input header")))
}

/// Reads `path` and validates it into a cohort.
pub fn read_cohort(path: &Path, spec: &ColumnSpec) -> Result<Cohort, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let time = column(&headers, &spec.time)?;
    let event = column(&headers, &spec.event)?;
    let covs = spec
        .covariates
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>, _>>()?;
    let treat = match &spec.treatment {
        Treatment::Single(z) => vec![column(&headers, z)?],
        Treatment::Factorial { z1, z2 } => vec![column(&headers, z1)?, column(&headers, z2)?],
    };

    let mut rows = Vec::new();
    let mut bad_cells = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("malformed CSV at data row {}: {e}", i + 1)))?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let treatment = match &spec.treatment {
            Treatment::Single(_) => get(treat[0]).to_string(),
            Treatment::Factorial { .. } => {
                let (a, b) = (parse_number(get(treat[0])), parse_number(get(treat[1])));
                if a.is_nan() || b.is_nan() {
                    String::new()
                } else {
                    match FactorialCoding::encode(a as u8, b as u8) {
                        Ok(code) if (a == 0.0 || a == 1.0) && (b == 0.0 || b == 1.0) => code.to_string(),
                        _ => {
                            bad_cells.push(i + 1);
                            String::new()
                        }
                    }
                }
            }
        };
        rows.push(RawRecord {
            time: parse_number(get(time)),
            event: parse_number(get(event)),
            treatment,
            covariates: covs.iter().map(|&k| parse_number(get(k))).collect(),
        });
    }
    if !bad_cells.is_empty() {
        return Err(CliError::Core(wcox_core::Error::Validation {
            message: format!(
                "factorial treatments must be 0 or 1 (rows {})",
                bad_cells.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
            ),
            rows: bad_cells,
        }));
    }

    let factorial = matches!(spec.treatment, Treatment::Factorial { .. });
    let reference = match (&spec.reference, factorial) {
        (Some(r), true) => Some(factorial_code(r)?.to_string()),
        (r, _) => r.clone(),
    };
    let opts = ValidationOptions {
        reference,
        covariate_names: spec.covariates.clone(),
    };
    let cohort = validate_cohort(&rows, &opts)?;
    if factorial {
        let all = FactorialCoding::labels();
        let labels = cohort
            .treatment_labels()
            .iter()
            .map(|code| all[code.parse::<usize>().expect("numeric cell code")].clone())
            .collect();
        return Ok(cohort.with_treatment_labels(labels)?);
    }
    Ok(cohort)
}

/// Parses a cell label such as `(1,0)` into its code.
pub fn factorial_code(label: &str) -> Result<usize, CliError> {
    let inner = label.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if let [a, b] = parts[..] {
        if let (Ok(a), Ok(b)) = (a.parse::<u8>(), b.parse::<u8>()) {
            return Ok(FactorialCoding::encode(a, b)?);
        }
    }
    Err(CliError::Usage(format!("'{label}' is not a factorial cell such as (1,0)")))
}
