use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// One treatment with three levels.
    Multi3,
    /// Two binary treatments, four cells.
    Factorial2x2,
}

impl Setting {
    pub fn levels(&self) -> usize {
        match self {
            Setting::Multi3 => 3,
            Setting::Factorial2x2 => 4,
        }
    }

    /// Number of free intercepts in the treatment model.
    pub fn n_intercepts(&self) -> usize {
        match self {
            Setting::Multi3 => 1,
            Setting::Factorial2x2 => 3,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Multi3 => "multi3",
            Setting::Factorial2x2 => "factorial",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multi3" | "multi" => Ok(Setting::Multi3),
            "factorial" | "factorial2x2" => Ok(Setting::Factorial2x2),
            _ => Err(Error::InvalidArgument(format!("unknown setting '{s}'"))),
        }
    }
}

/// Data-generating process and study design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub setting: Setting,
    pub psi: f64,
    pub n: usize,
    pub target_censoring: f64,
    /// Treatment-model directions before normalization.
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub beta: Vec<f64>,
    /// Conditional log hazard ratios by treatment level (level 0 first).
    pub theta: Vec<f64>,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub replicates: usize,
    pub bootstrap_b: usize,
    pub seed: u64,
    /// Monte Carlo size for intercept and censoring calibration.
    pub calibration_size: usize,
    /// Monte Carlo size for the true-estimand oracle.
    pub estimand_size: usize,
}

impl ScenarioConfig {
    pub fn new(setting: Setting, psi: f64, target_censoring: f64) -> Self {
        let theta = match setting {
            Setting::Multi3 => vec![0.0, 0.35, -0.20],
            Setting::Factorial2x2 => vec![0.0, 0.35, -0.20, 0.15],
        };
        Self {
            setting,
            psi,
            n: 1000,
            target_censoring,
            b: vec![0.6, -0.4, 0.3, 0.2, -0.1, 0.15],
            c: vec![0.4, 0.2, -0.3, 0.1, 0.1, -0.2],
            beta: vec![1.2, -0.9, 0.8, 0.6, -0.3, 0.4],
            theta,
            weibull_shape: 1.2,
            weibull_scale: 1.0,
            replicates: 1000,
            bootstrap_b: 200,
            seed: 20240101,
            calibration_size: 1_000_000,
            estimand_size: 2_000_000,
        }
    }

    pub fn levels(&self) -> usize {
        self.setting.levels()
    }

    pub fn b_unit(&self) -> Vec<f64> {
        unit(&self.b)
    }

    pub fn c_unit(&self) -> Vec<f64> {
        unit(&self.c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.psi.is_finite() && self.psi >= 0.0) {
            return bad("psi must be finite and nonnegative");
        }
        if self.n < 4 * self.levels() {
            return bad("n must be at least 4 units per treatment level");
        }
        if !(self.target_censoring > 0.0 && self.target_censoring < 1.0) {
            return bad("target must be in (0,1)");
        }
        if self.b.len() != 6 || self.c.len() != 6 || self.beta.len() != 6 {
            return bad("b, c and beta must have six entries");
        }
        if self.theta.len() != self.levels() {
            return bad("theta must have one entry per treatment level");
        }
        if !(self.weibull_shape > 0.0 && self.weibull_scale > 0.0) {
            return bad("Weibull shape and scale must be positive");
        }
        if self.b.iter().all(|v| *v == 0.0) || self.c.iter().all(|v| *v == 0.0) {
            return bad("direction vectors must be nonzero");
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, vectors are comma lists.
    ///
    /// `setting` must appear before keys whose defaults depend on it.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("line {}: expected key = value", lineno + 1))
            })?;
            pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let setting = pairs
            .iter()
            .find(|(k, _)| k == "setting")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Setting::Multi3);
        let mut cfg = ScenarioConfig::new(setting, 1.0, 0.25);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value '{v}' for {key}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "setting" => self.setting = value.parse()?,
            "psi" => self.psi = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "censoring" | "target_censoring" => self.target_censoring = num(key, value)?,
            "b" => self.b = list(key, value)?,
            "c" => self.c = list(key, value)?,
            "beta" => self.beta = list(key, value)?,
            "theta" => self.theta = list(key, value)?,
            "weibull_shape" | "shape" => self.weibull_shape = num(key, value)?,
            "weibull_scale" | "scale" => self.weibull_scale = num(key, value)?,
            "replicates" => self.replicates = num(key, value)?,
            "bootstrap_b" | "bootstrap" => self.bootstrap_b = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "calibration_size" => self.calibration_size = num(key, value)?,
            "estimand_size" | "m" => self.estimand_size = num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values() {
        let cfg = ScenarioConfig::from_key_values(
            "# demo\nsetting = factorial\npsi = 2\ncensoring = 0.5\nseed = 11\nb = 1,0,0,0,0,0\n",
        )
        .unwrap();
        assert_eq!(cfg.setting, Setting::Factorial2x2);
        assert_eq!(cfg.psi, 2.0);
        assert_eq!(cfg.theta.len(), 4);
        assert_eq!(cfg.b_unit(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_censoring() {
        let err = ScenarioConfig::from_key_values("censoring = 0").unwrap_err();
        assert!(err.to_string().contains("target must be in (0,1)"));
    }

    #[test]
    fn unit_direction() {
        let b = ScenarioConfig::new(Setting::Multi3, 1.0, 0.25).b_unit();
        let norm: f64 = b.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-15);
    }
}
