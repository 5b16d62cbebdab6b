//! Skip-step reverse sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::process::predict_s0_batch;
use super::DiffusionSchedule;
use crate::numkit::{Matrix, NoiseInput, NoiseNet};
use crate::{Error, Result};

/// Estimates added to `Ŝ0` are clipped to this range at every reverse step.
pub const DEFAULT_CLAMP: (f64, f64) = (-1.0, 2.0);

/// A conditional noise predictor `ε_θ(S_t, x, f(x), t)`.
pub trait NoiseModel {
    /// Inference-mode noise prediction for a batch.
    fn predict_noise(&self, input: &NoiseInput<'_>) -> Result<Matrix>;

    /// Mean over rows of `‖target − ε̂‖²`. Trainable models also leave the
    /// gradient of this loss in their parameters.
    fn loss_and_grad(&mut self, input: &NoiseInput<'_>, target: &Matrix) -> Result<f64> {
        let pred = self.predict_noise(input)?;
        let diff = pred.sub(target)?;
        Ok(diff.as_slice().iter().map(|v| v * v).sum::<f64>() / pred.rows().max(1) as f64)
    }
}

impl NoiseModel for NoiseNet {
    fn predict_noise(&self, input: &NoiseInput<'_>) -> Result<Matrix> {
        self.predict(input)
    }

    fn loss_and_grad(&mut self, input: &NoiseInput<'_>, target: &Matrix) -> Result<f64> {
        self.forward_backward(input, target)
    }
}

/// Supplies standard-normal noise for a given batch row.
pub trait NoiseSource {
    fn fill_row(&mut self, row: usize, out: &mut [f64]);
}

/// Returns zeros; makes the sampler deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn fill_row(&mut self, _row: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// One independent ChaCha stream per row, keyed by `(seed, stream id)`.
///
/// Rows that share a seed and stream id draw identical noise regardless of
/// batch composition.
#[derive(Debug, Clone)]
pub struct RowStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl RowStreams {
    pub fn new(seed: u64, stream_ids: impl IntoIterator<Item = u64>) -> Self {
        let rngs = stream_ids
            .into_iter()
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(id);
                rng
            })
            .collect();
        Self { rngs }
    }
}

impl NoiseSource for RowStreams {
    fn fill_row(&mut self, row: usize, out: &mut [f64]) {
        let rng = &mut self.rngs[row];
        out.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
    }
}

/// Evenly spaced descending timesteps from `T` down to 1.
///
/// A length of 1 gives `[T]`; lengths of `T` or more give every step.
pub fn make_trajectory(steps: usize, len: usize) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::config("trajectory", "length must be at least 1"));
    }
    if steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    if len == 1 {
        return Ok(vec![steps]);
    }
    if len >= steps {
        return Ok((1..=steps).rev().collect());
    }
    let span = (steps - 1) as f64 / (len - 1) as f64;
    Ok((0..len).rev().map(|i| 1 + (i as f64 * span).round() as usize).collect())
}

fn check_trajectory(trajectory: &[usize], sched: &DiffusionSchedule) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::config("trajectory", "empty trajectory"));
    }
    for &t in trajectory {
        sched.check_t(t)?;
    }
    if trajectory.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("trajectory", "timesteps must be strictly decreasing"));
    }
    Ok(())
}

/// Draws one `S_0` per row with the default clamp. See [`sample_reverse_with`].
pub fn sample_reverse<M, N>(
    model: &M,
    features: &Matrix,
    prior: &Matrix,
    sched: &DiffusionSchedule,
    trajectory: &[usize],
    noise: &mut N,
) -> Result<Matrix>
where
    M: NoiseModel + ?Sized,
    N: NoiseSource + ?Sized,
{
    sample_reverse_with(model, features, prior, sched, trajectory, noise, Some(DEFAULT_CLAMP))
}

/// Reverse sampling along a decreasing timestep subsequence.
///
/// Starts from `S_T ~ N(prior, I)`. At each trajectory step the model is
/// called once on the whole batch, `Ŝ0` is reconstructed and clamped, and the
/// state jumps to the next trajectory step through the posterior mean (plus
/// posterior noise). After the last step the clamped `Ŝ0` is returned.
pub fn sample_reverse_with<M, N>(
    model: &M,
    features: &Matrix,
    prior: &Matrix,
    sched: &DiffusionSchedule,
    trajectory: &[usize],
    noise: &mut N,
    clamp: Option<(f64, f64)>,
) -> Result<Matrix>
where
    M: NoiseModel + ?Sized,
    N: NoiseSource + ?Sized,
{
    check_trajectory(trajectory, sched)?;
    if features.rows() != prior.rows() {
        return Err(Error::shape("sample_reverse", format!("features {:?}, prior {:?}", features.shape(), prior.shape())));
    }
    let (n, q) = prior.shape();
    let mut eps = vec![0.0; q];
    let mut state = prior.clone();
    for r in 0..n {
        noise.fill_row(r, &mut eps);
        for (s, e) in state.row_mut(r).iter_mut().zip(&eps) {
            *s += e;
        }
    }
    let mut s0_hat = state.clone();
    for (i, &t) in trajectory.iter().enumerate() {
        let timesteps = vec![t; n];
        let eps_hat = model.predict_noise(&NoiseInput { noised: &state, features, prior, timesteps: &timesteps })?;
        s0_hat = predict_s0_batch(&state, t, prior, &eps_hat, sched)?;
        if let Some((lo, hi)) = clamp {
            s0_hat = s0_hat.map(|v| v.clamp(lo, hi));
        }
        let next = trajectory.get(i + 1).copied().unwrap_or(0);
        if next == 0 {
            break;
        }
        let c = sched.posterior_jump(t, next)?;
        let sd = c.variance.sqrt();
        for r in 0..n {
            noise.fill_row(r, &mut eps);
            let s0r = s0_hat.row(r).to_vec();
            let fr = prior.row(r).to_vec();
            for (((s, a), f), e) in state.row_mut(r).iter_mut().zip(&s0r).zip(&fr).zip(&eps) {
                *s = c.gamma0 * a + c.gamma1 * *s + c.gamma2 * f + sd * e;
            }
        }
        if !state.is_finite() {
            return Err(Error::NonFinite { layer: format!("reverse step t={t}") });
        }
    }
    Ok(s0_hat)
}
