use serde::{Deserialize, Serialize};

use crate::numkit::Matrix;
use crate::{Error, Result};

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("accuracy", format!("{} predictions for {} labels", predictions.len(), truth.len())));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy restricted to each true class; `None` for classes with no instances.
pub fn per_class_accuracy(predictions: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Option<f64>>> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("per_class_accuracy", format!("{} predictions for {} labels", predictions.len(), truth.len())));
    }
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if t >= classes {
            return Err(Error::Data(format!("label {t} outside {classes} classes")));
        }
        counts[t] += 1;
        hits[t] += usize::from(p == t);
    }
    Ok(hits.iter().zip(&counts).map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64)).collect())
}

/// One equal-width confidence bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean top-class probability of the instances in the bin (0 when empty).
    pub confidence: f64,
    /// Fraction of those instances predicted correctly (0 when empty).
    pub accuracy: f64,
    pub count: usize,
}

/// Expected calibration error over `n_bins` equal-width bins on `[0, 1]`.
///
/// Confidence is the row maximum and the prediction its argmax (lowest index
/// on ties). A confidence of exactly 1 lands in the last bin. Returns the
/// error and every bin, including empty ones.
pub fn ece(probs: &Matrix, truth: &[usize], n_bins: usize) -> Result<(f64, Vec<CalibrationBin>)> {
    if n_bins < 1 {
        return Err(Error::config("bins", "need at least one bin"));
    }
    if probs.rows() != truth.len() {
        return Err(Error::shape("ece", format!("{} probability rows for {} labels", probs.rows(), truth.len())));
    }
    let mut conf_sum = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (r, &y) in truth.iter().enumerate() {
        let pred = probs.argmax_row(r);
        let conf = probs.get(r, pred);
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::Data(format!("row {r} has confidence {conf} outside [0, 1]")));
        }
        let b = ((conf * n_bins as f64) as usize).min(n_bins - 1);
        conf_sum[b] += conf;
        counts[b] += 1;
        hits[b] += usize::from(pred == y);
    }
    let n = truth.len().max(1) as f64;
    let mut total = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            let (confidence, accuracy) = if counts[b] > 0 {
                let c = counts[b] as f64;
                (conf_sum[b] / c, hits[b] as f64 / c)
            } else {
                (0.0, 0.0)
            };
            total += counts[b] as f64 / n * (accuracy - confidence).abs();
            CalibrationBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                confidence,
                accuracy,
                count: counts[b],
            }
        })
        .collect();
    Ok((total, bins))
}
