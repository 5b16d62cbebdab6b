use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::process::forward_sample_batch;
use super::sampler::NoiseModel;
use super::DiffusionSchedule;
use crate::numkit::{Matrix, NoiseInput};
use crate::{Error, Result};

/// A training batch: instance features, clean label targets and prior means.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionBatch<'a> {
    pub features: &'a Matrix,
    pub targets: &'a Matrix,
    pub prior: &'a Matrix,
}

/// Noise-prediction loss with a uniformly drawn timestep and fresh Gaussian
/// noise per row. Gradients land in the model.
pub fn diffusion_loss<M, R>(model: &mut M, batch: DiffusionBatch<'_>, sched: &DiffusionSchedule, rng: &mut R) -> Result<f64>
where
    M: NoiseModel + ?Sized,
    R: Rng + ?Sized,
{
    let (n, q) = batch.targets.shape();
    let timesteps: Vec<usize> = (0..n).map(|_| rng.random_range(1..=sched.steps())).collect();
    let noise = Matrix::from_vec(n, q, (0..n * q).map(|_| StandardNormal.sample(rng)).collect())?;
    diffusion_loss_fixed(model, batch, sched, &timesteps, &noise)
}

/// [`diffusion_loss`] with caller-chosen timesteps and noise.
pub fn diffusion_loss_fixed<M>(
    model: &mut M,
    batch: DiffusionBatch<'_>,
    sched: &DiffusionSchedule,
    timesteps: &[usize],
    noise: &Matrix,
) -> Result<f64>
where
    M: NoiseModel + ?Sized,
{
    if batch.targets.rows() == 0 {
        return Err(Error::Data("empty diffusion batch".into()));
    }
    let noised = forward_sample_batch(batch.targets, batch.prior, timesteps, noise, sched)?;
    let input = NoiseInput { noised: &noised, features: batch.features, prior: batch.prior, timesteps };
    model.loss_and_grad(&input, noise)
}
