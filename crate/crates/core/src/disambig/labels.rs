//! Pseudo-clean label construction and refinement.

use super::graph::{jaccard, sorted_sets, Adjacency, JaccardMatrix};
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Default blend toward the identity before inverting the transition matrix.
pub const DEFAULT_INVERSE_REG: f64 = 0.05;

/// 0/1 mask with a one at `(i, c)` iff `c` is a candidate of instance `i`.
pub fn candidate_mask(candidates: &[Vec<usize>], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(candidates.len(), classes);
    for (i, set) in candidates.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::Data(format!("candidate set of instance {i} is empty")));
        }
        for &c in set {
            if c >= classes {
                return Err(Error::Data(format!("instance {i} has candidate {c} outside {classes} classes")));
            }
            m.set(i, c, 1.0);
        }
    }
    Ok(m)
}

/// Rows of the mask scaled to sum to one.
pub fn uniform_over_candidates(mask: &Matrix) -> Matrix {
    let mut out = mask.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}

/// Zeroes non-candidate entries and row-normalizes. Rows with no remaining
/// mass become uniform over their candidates.
pub fn normalize_masked(raw: &Matrix, mask: &Matrix) -> Result<Matrix> {
    let mut out = raw.hadamard(mask)?;
    for r in 0..out.rows() {
        let total: f64 = out.row(r).iter().sum();
        if total > 0.0 && total.is_finite() {
            out.row_mut(r).iter_mut().for_each(|v| *v /= total);
        } else {
            let m = mask.row(r);
            let count: f64 = m.iter().sum();
            for (v, &mv) in out.row_mut(r).iter_mut().zip(m) {
                *v = mv / count;
            }
        }
    }
    Ok(out)
}

/// `S = normalize_masked((P ⊙ J)·Y)`, the dense form.
pub fn init_pseudo_clean(adjacency: &Adjacency, jac: &JaccardMatrix, mask: &Matrix) -> Result<Matrix> {
    let p = adjacency.to_dense();
    let gate = p.hadamard(&jac.0)?;
    let raw = gate.matmul(mask)?;
    normalize_masked(&raw, mask)
}

/// Same result as [`init_pseudo_clean`], touching only graph edges instead of
/// dense `N×N` matrices.
pub fn init_pseudo_clean_sparse(adjacency: &Adjacency, candidates: &[Vec<usize>], classes: usize) -> Result<Matrix> {
    let sets = sorted_sets(candidates)?;
    if sets.len() != adjacency.len() {
        return Err(Error::shape("init_pseudo_clean", format!("{} sets for {} nodes", sets.len(), adjacency.len())));
    }
    let mask = candidate_mask(&sets, classes)?;
    let mut raw = Matrix::zeros(sets.len(), classes);
    for i in 0..sets.len() {
        let own = adjacency.has_self_loops().then_some(i);
        for j in adjacency.neighbors(i).iter().copied().chain(own) {
            let w = jaccard(&sets[i], &sets[j]);
            if w == 0.0 {
                continue;
            }
            let row = raw.row_mut(i);
            for &c in &sets[j] {
                row[c] += w;
            }
        }
    }
    normalize_masked(&raw, &mask)
}

/// `T_ij = Σ_n 1[i ∈ S_n]·S_nj / Σ_n S_nj`: the probability that label `i`
/// is a candidate given true label `j`, weighting instances by their current
/// belief in `j`. Columns with no mass become the unit vector `e_j`.
pub fn estimate_transition(s: &Matrix, mask: &Matrix) -> Result<Matrix> {
    if s.shape() != mask.shape() {
        return Err(Error::shape("estimate_transition", format!("S {:?} vs mask {:?}", s.shape(), mask.shape())));
    }
    let q = s.cols();
    // mask^T · S gives the numerator directly.
    let numer = mask.t_matmul(s)?;
    let denom = s.sum_rows();
    let mut t = Matrix::zeros(q, q);
    for j in 0..q {
        let d = denom.get(0, j);
        for i in 0..q {
            let v = if d > 0.0 { numer.get(i, j) / d } else if i == j { 1.0 } else { 0.0 };
            t.set(i, j, v);
        }
    }
    Ok(t)
}

/// Maps each row `r` to `T_reg⁻¹·r` with `T_reg = (1 − λ)·T + λ·I`, then clips
/// negatives to zero. Falls back to the identity when `T_reg` is singular.
pub fn apply_inverse_transition(transition: &Matrix, s0_tilde: &Matrix, lambda: f64) -> Result<Matrix> {
    let q = transition.rows();
    if transition.cols() != q || s0_tilde.cols() != q {
        return Err(Error::shape(
            "apply_inverse_transition",
            format!("T {:?}, S̃0 {:?}", transition.shape(), s0_tilde.shape()),
        ));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config("lambda", format!("{lambda} is outside [0, 1]")));
    }
    let reg = transition.scale(1.0 - lambda).add(&Matrix::identity(q).scale(lambda))?;
    let inv = match reg.inverse() {
        Ok(inv) if inv.is_finite() => inv,
        _ => {
            log::warn!("regularized transition matrix is singular; using the identity");
            Matrix::identity(q)
        }
    };
    Ok(s0_tilde.matmul_t(&inv)?.map(|v| v.max(0.0)))
}

/// Current beliefs about the true labels during training.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    /// Pseudo-clean labels `S^e`, rows are probability vectors on the candidates.
    pub s: Matrix,
    /// Most recent denoised estimate `S̃0`.
    pub s0_tilde: Matrix,
    /// Transition matrix `T^e`.
    pub transition: Matrix,
    pub epoch: usize,
    pub mask: Matrix,
}

impl LabelState {
    /// State at epoch 1 with `T = I` and `S̃0 = S`.
    pub fn new(s: Matrix, mask: Matrix) -> Result<Self> {
        if s.shape() != mask.shape() {
            return Err(Error::shape("LabelState", format!("S {:?} vs mask {:?}", s.shape(), mask.shape())));
        }
        let q = s.cols();
        Ok(Self { s0_tilde: s.clone(), s, transition: Matrix::identity(q), epoch: 1, mask })
    }
}

/// `S^{e+1} = normalize_masked((S^e + T⁻¹-corrected S̃0) ⊙ S^e)`.
pub fn update_pseudo_clean(state: &LabelState, s0_tilde: &Matrix, lambda: f64) -> Result<LabelState> {
    if s0_tilde.shape() != state.s.shape() {
        return Err(Error::shape("update_pseudo_clean", format!("S̃0 {:?} vs S {:?}", s0_tilde.shape(), state.s.shape())));
    }
    let corrected = apply_inverse_transition(&state.transition, s0_tilde, lambda)?;
    let raw = state.s.add(&corrected)?.hadamard(&state.s)?;
    Ok(LabelState {
        s: normalize_masked(&raw, &state.mask)?,
        s0_tilde: s0_tilde.clone(),
        transition: state.transition.clone(),
        epoch: state.epoch + 1,
        mask: state.mask.clone(),
    })
}
