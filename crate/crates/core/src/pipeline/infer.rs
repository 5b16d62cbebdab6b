use super::encoder::EncoderPrior;
use super::train::TrainedModel;
use super::TrainConfig;
use crate::data::PartialDataset;
use crate::diffusion::{make_trajectory, sample_reverse, DiffusionSchedule, NoiseModel, RowStreams};
use crate::eval::EvalReport;
use crate::numkit::Matrix;
use crate::{Error, Result};

const TAG_INFER: u64 = 0x696e_6665_72;

/// SplitMix64 finalizer over `(seed, tag, index)`.
pub(crate) fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean of `draws` reverse samples. Draw `k` uses row streams keyed by
/// `derive_seed(seed, k)` and `stream_ids`, averaged in draw order.
pub(crate) fn sample_average<M: NoiseModel + ?Sized>(
    model: &M,
    features: &Matrix,
    prior: &Matrix,
    sched: &DiffusionSchedule,
    trajectory: &[usize],
    draws: usize,
    seed: u64,
    stream_ids: &[u64],
) -> Result<Matrix> {
    if stream_ids.len() != features.rows() {
        return Err(Error::shape("sample_average", format!("{} stream ids for {} rows", stream_ids.len(), features.rows())));
    }
    let mut acc = Matrix::zeros(prior.rows(), prior.cols());
    for k in 0..draws {
        let mut noise = RowStreams::new(derive_seed(seed, 0, k as u64), stream_ids.iter().copied());
        let s0 = sample_reverse(model, features, prior, sched, trajectory, &mut noise)?;
        acc.add_assign(&s0)?;
    }
    Ok(acc.scale(1.0 / draws.max(1) as f64))
}

/// Class probabilities and their argmax predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub probs: Matrix,
    pub predictions: Vec<usize>,
}

/// Clips negatives and rescales each row to sum to one. Rows without positive
/// mass become uniform.
pub fn to_probabilities(raw: &Matrix) -> Matrix {
    let q = raw.cols();
    let mut out = raw.map(|v| if v > 0.0 { v } else { 0.0 });
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let total: f64 = row.iter().sum();
        if total > 0.0 && total.is_finite() {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / q as f64);
        }
    }
    out
}

/// Averages `n_draws` reverse-sampled label vectors per instance, with each
/// instance's noise drawn from its own stream `stream_ids[i]`.
#[allow(clippy::too_many_arguments)]
pub fn infer_with_streams<M: NoiseModel + ?Sized>(
    model: &M,
    features: &Matrix,
    prior: &Matrix,
    sched: &DiffusionSchedule,
    trajectory: &[usize],
    n_draws: usize,
    seed: u64,
    stream_ids: &[u64],
) -> Result<Inference> {
    if n_draws == 0 {
        return Err(Error::config("n_draws", "must be at least 1"));
    }
    let mean = sample_average(model, features, prior, sched, trajectory, n_draws, derive_seed(seed, TAG_INFER, 0), stream_ids)?;
    let probs = to_probabilities(&mean);
    let predictions = (0..probs.rows()).map(|r| probs.argmax_row(r)).collect();
    Ok(Inference { probs, predictions })
}

/// Predicts labels for `features`; instance `i` uses noise stream `i`.
pub fn infer_labels<M: NoiseModel + ?Sized>(
    model: &M,
    encoder: &EncoderPrior,
    features: &Matrix,
    cfg: &TrainConfig,
    n_draws: usize,
) -> Result<Inference> {
    let prior = encoder.prior(features)?;
    let sched = cfg.schedule()?;
    let trajectory = make_trajectory(cfg.steps, cfg.trajectory)?;
    let ids: Vec<u64> = (0..features.rows() as u64).collect();
    infer_with_streams(model, features, &prior, &sched, &trajectory, n_draws, cfg.seed, &ids)
}

/// Inference plus metrics on a labelled dataset.
pub fn evaluate(trained: &TrainedModel, data: &PartialDataset) -> Result<EvalReport> {
    let truth = data.truth.as_deref().ok_or_else(|| Error::Data("evaluation data has no true labels".into()))?;
    let cfg = &trained.config;
    let inf = infer_labels(&trained.model, &trained.encoder, &data.features, cfg, cfg.n_draws)?;
    EvalReport::from_predictions(&inf.probs, truth, cfg.n_bins, cfg.to_map(), cfg.seed)
}
