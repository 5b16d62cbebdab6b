use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A seeded partition of `0..N` into folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldSpec {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Every index outside fold `k`, in fold order.
    pub fn train_indices(&self, k: usize) -> Vec<usize> {
        self.folds.iter().enumerate().filter(|(i, _)| *i != k).flat_map(|(_, f)| f.iter().copied()).collect()
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Shuffles `0..n` and slices it contiguously; the first `n % folds` folds get
/// one extra index.
pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<FoldSpec> {
    if folds == 0 || folds > n {
        return Err(Error::config("folds", format!("need 1 ≤ folds ≤ N, got {folds} with N={n}")));
    }
    let idx = shuffled(n, seed);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldSpec { folds: out, seed })
}

/// Seeded `(train, test)` split with `round(n * test_frac)` test indices.
pub fn train_test_split(n: usize, test_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::config("test_frac", format!("{test_frac} is outside (0, 1)")));
    }
    let n_test = ((n as f64) * test_frac).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::config("test_frac", format!("{test_frac} of {n} instances leaves an empty side")));
    }
    let idx = shuffled(n, seed);
    Ok((idx[n_test..].to_vec(), idx[..n_test].to_vec()))
}
