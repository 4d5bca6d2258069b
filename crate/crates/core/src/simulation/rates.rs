//! Observed event rates by time point.

use serde::Serialize;

use crate::error::Result;
use crate::seeds::{stream_rng, streams};
use crate::simulation::calibrate::Calibration;
use crate::simulation::config::ScenarioConfig;
use crate::simulation::dgp::generate_replicate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRate {
    /// `None` for the whole cohort.
    pub group: Option<String>,
    pub time: f64,
    /// Fraction of units with an observed event at or before `time`.
    pub rate: f64,
}

/// Rates of `delta = 1` with `Y <= t`, overall then per treatment group.
pub fn event_rates(
    cfg: &ScenarioConfig,
    calib: &Calibration,
    times: &[f64],
    size: usize,
    seed: u64,
) -> Result<Vec<EventRate>> {
    let mut rng = stream_rng(seed, streams::EVENT_RATES);
    let data = generate_replicate(cfg, &calib.intercepts, calib.lambda_c, size, &mut rng)?;
    let c = &data.cohort;
    let rate = |t: f64, group: Option<usize>| {
        let (mut hits, mut total) = (0usize, 0usize);
        for i in 0..c.n() {
            if group.is_some_and(|g| c.treatment()[i] != g) {
                continue;
            }
            total += 1;
            if c.event()[i] && c.time()[i] <= t {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    };
    let mut out = Vec::new();
    for &t in times {
        out.push(EventRate {
            group: None,
            time: t,
            rate: rate(t, None),
        });
        for g in 0..c.levels() {
            out.push(EventRate {
                group: Some(c.treatment_labels()[g].clone()),
                time: t,
                rate: rate(t, Some(g)),
            });
        }
    }
    Ok(out)
}
