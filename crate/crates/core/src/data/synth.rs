//! Synthetic data: Gaussian blobs and candidate-set partialization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PartialDataset;
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Fully labelled data.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

/// Class centres with every pairwise distance equal to `separation` when
/// `d ≥ Q` (scaled simplex corners). With fewer dimensions the centres sit on
/// a circle in the first two coordinates with neighbouring centres
/// `separation` apart, or on a line when `d = 1`.
fn centers(classes: usize, dim: usize, separation: f64) -> Matrix {
    let mut c = Matrix::zeros(classes, dim);
    if dim >= classes {
        for k in 0..classes {
            c.set(k, k, separation / std::f64::consts::SQRT_2);
        }
    } else if dim >= 2 {
        let radius = if classes > 1 {
            separation / (2.0 * (std::f64::consts::PI / classes as f64).sin())
        } else {
            0.0
        };
        for k in 0..classes {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
            c.set(k, 0, radius * angle.cos());
            c.set(k, 1, radius * angle.sin());
        }
    } else {
        for k in 0..classes {
            c.set(k, 0, separation * k as f64);
        }
    }
    c
}

/// Class-balanced isotropic Gaussian clusters with unit within-class variance.
pub fn make_blobs(n: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<CleanDataset> {
    if classes == 0 || classes > n {
        return Err(Error::config("classes", format!("need 1 ≤ Q ≤ N, got Q={classes} with N={n}")));
    }
    if dim == 0 {
        return Err(Error::config("dim", "must be at least 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::config("separation", format!("{separation} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let centres = centers(classes, dim, separation);
    let mut features = Matrix::zeros(n, dim);
    for (i, &y) in labels.iter().enumerate() {
        for (c, v) in features.row_mut(i).iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = centres.get(y, c) + z;
        }
    }
    Ok(CleanDataset { features, labels, classes })
}

/// Candidate set = true label plus each other label independently with
/// probability `q`.
pub fn partialize(clean: &CleanDataset, q: f64, seed: u64) -> Result<PartialDataset> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config("q", format!("{q} is outside [0, 1]")));
    }
    if let Some(&y) = clean.labels.iter().find(|&&y| y >= clean.classes) {
        return Err(Error::Data(format!("label {y} outside {} classes", clean.classes)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = clean
        .labels
        .iter()
        .map(|&y| (0..clean.classes).filter(|&c| c == y || rng.random::<f64>() < q).collect())
        .collect();
    PartialDataset::new(clean.features.clone(), candidates, Some(clean.labels.clone()), clean.classes)
}
