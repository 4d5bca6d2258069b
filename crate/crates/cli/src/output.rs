//! Run manifests, file output and SVG rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use wcox_core::km::KmCurve;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    /// Input path -> SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<f64>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
    timing: bool,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: Value, seed: Option<u64>, timing: bool) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                config,
                inputs: BTreeMap::new(),
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                duration_seconds: None,
            },
            started: Instant::now(),
            timing,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        self.manifest.inputs.insert(path.display().to_string(), hex);
        Ok(())
    }

    pub fn finish(mut self) -> RunManifest {
        if self.timing {
            self.manifest.duration_seconds = Some(self.started.elapsed().as_secs_f64());
        }
        self.manifest
    }
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}")))
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// CSV field, quoted only when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Step-function plot with one polyline per curve.
pub fn km_svg(curves: &[KmCurve], cumulative: bool, title: &str) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let t_max = curves
        .iter()
        .flat_map(|c| c.event_times.last().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let sx = |t: f64| pad + (w - 2.0 * pad) * t / t_max;
    let sy = |v: f64| h - pad - (h - 2.0 * pad) * v;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#,
        y = h - pad
    );
    for (k, c) in curves.iter().enumerate() {
        let value = |v: f64| if cumulative { 1.0 - v } else { v };
        let mut pts = vec![(0.0, value(1.0))];
        let mut prev = value(1.0);
        for (t, v) in c.event_times.iter().zip(&c.survival) {
            pts.push((*t, prev));
            prev = value(*v);
            pts.push((*t, prev));
        }
        let points: Vec<String> = pts
            .iter()
            .map(|(t, v)| format!("{:.3},{:.3}", sx(*t), sy(*v)))
            .collect();
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline data-group="{}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            escape(&c.label),
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}" font-size="12">{}</text>"#,
            w - pad + 5.0,
            pad + 15.0 * k as f64,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
