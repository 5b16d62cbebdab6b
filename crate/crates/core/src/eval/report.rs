//! Evaluation report and its on-disk artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, ece, per_class_accuracy, CalibrationBin};
use crate::numkit::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<CalibrationBin>,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub n_eval: usize,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
}

impl EvalReport {
    /// Scores class probabilities against true labels.
    pub fn from_predictions(
        probs: &Matrix,
        truth: &[usize],
        n_bins: usize,
        config: BTreeMap<String, String>,
        seed: u64,
    ) -> Result<Self> {
        let preds: Vec<usize> = (0..probs.rows()).map(|r| probs.argmax_row(r)).collect();
        let (ece, bins) = ece(probs, truth, n_bins)?;
        Ok(Self {
            accuracy: accuracy(&preds, truth)?,
            ece,
            bins,
            per_class_accuracy: per_class_accuracy(&preds, truth, probs.cols())?,
            n_eval: truth.len(),
            config,
            seed,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("bad report JSON: {e}")))
    }

    pub fn bins_csv(&self) -> String {
        let mut out = String::from("bin,lower,upper,confidence,accuracy,count\n");
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{},{},{}", b.lower, b.upper, b.confidence, b.accuracy, b.count);
        }
        out
    }

    /// Reliability diagram: per-bin accuracy bars, the mean confidence of each
    /// bin as a marker, and the diagonal of perfect calibration.
    pub fn reliability_svg(&self) -> String {
        const W: f64 = 420.0;
        const H: f64 = 420.0;
        const PAD: f64 = 50.0;
        let plot = W - 2.0 * PAD;
        let x = |v: f64| PAD + v * plot;
        let y = |v: f64| H - PAD - v * plot;
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(s, r#"  <rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"  <g id="bars" fill="steelblue" stroke="navy" stroke-width="0.5">"#);
        for b in &self.bins {
            if b.count == 0 {
                continue;
            }
            let (x0, x1) = (x(b.lower), x(b.upper));
            let top = y(b.accuracy);
            let _ = writeln!(
                s,
                r#"    <rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{:.2}"><title>conf {:.3} acc {:.3} n={}</title></rect>"#,
                x1 - x0,
                y(0.0) - top,
                b.confidence,
                b.accuracy,
                b.count
            );
        }
        let _ = writeln!(s, "  </g>");
        let _ = writeln!(s, r#"  <g id="confidence" fill="orange">"#);
        for b in self.bins.iter().filter(|b| b.count > 0) {
            let _ = writeln!(s, r#"    <circle cx="{:.2}" cy="{:.2}" r="3"/>"#, x((b.lower + b.upper) / 2.0), y(b.confidence));
        }
        let _ = writeln!(s, "  </g>");
        let _ = writeln!(
            s,
            r#"  <line id="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            x(0.0),
            y(0.0),
            x(1.0),
            y(1.0)
        );
        let _ = writeln!(
            s,
            r#"  <rect x="{PAD}" y="{PAD}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(s, r#"  <text x="{}" y="{}" text-anchor="middle" font-size="13">Confidence</text>"#, W / 2.0, H - 15.0);
        let _ = writeln!(
            s,
            r#"  <text x="15" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 15 {})">Accuracy</text>"#,
            H / 2.0,
            H / 2.0
        );
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="30" text-anchor="middle" font-size="14">ECE = {:.4}, accuracy = {:.4}</text>"#,
            W / 2.0,
            self.ece,
            self.accuracy
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Writes `report.json`, `reliability.csv` and `reliability.svg` into `out_dir`
/// (created if missing) and returns their paths.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = [
        ("report.json", report.to_json()),
        ("reliability.csv", report.bins_csv()),
        ("reliability.svg", report.reliability_svg()),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
