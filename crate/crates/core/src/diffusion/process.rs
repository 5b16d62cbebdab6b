//! Closed-form forward noising, `Ŝ0` reconstruction and the posterior step.
//!
//! The forward chain is centred on the prior mean `f(x)`:
//! `S_t = √ᾱ_t·S_0 + (1 − √ᾱ_t)·f(x) + √(1 − ᾱ_t)·ε`.

use super::DiffusionSchedule;
use crate::numkit::Matrix;
use crate::{Error, Result};

/// A label vector at diffusion step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedLabel {
    pub t: usize,
    pub value: Vec<f64>,
}

fn check_lengths(op: &'static str, lens: &[usize]) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::shape(op, format!("vector lengths {lens:?}")));
    }
    Ok(())
}

pub fn forward_sample(s0: &[f64], prior: &[f64], t: usize, noise: &[f64], sched: &DiffusionSchedule) -> Result<NoisedLabel> {
    sched.check_t(t)?;
    check_lengths("forward_sample", &[s0.len(), prior.len(), noise.len()])?;
    let a = sched.alpha_bar(t).sqrt();
    let sigma = (1.0 - sched.alpha_bar(t)).sqrt();
    let value = s0
        .iter()
        .zip(prior)
        .zip(noise)
        .map(|((s, f), e)| a * s + (1.0 - a) * f + sigma * e)
        .collect();
    Ok(NoisedLabel { t, value })
}

/// Inverts [`forward_sample`] given a noise estimate.
pub fn predict_s0(st: &NoisedLabel, prior: &[f64], eps_hat: &[f64], sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    sched.check_t(st.t)?;
    check_lengths("predict_s0", &[st.value.len(), prior.len(), eps_hat.len()])?;
    let bar = sched.alpha_bar(st.t);
    if bar <= 0.0 {
        return Err(Error::Numeric(format!("ᾱ_{} = {bar} is not positive", st.t)));
    }
    let a = bar.sqrt();
    let sigma = (1.0 - bar).sqrt();
    Ok(st
        .value
        .iter()
        .zip(prior)
        .zip(eps_hat)
        .map(|((s, f), e)| (s - (1.0 - a) * f - sigma * e) / a)
        .collect())
}

/// One ancestral step `S_t → S_{t−1}`; pass zero noise at `t = 1`.
pub fn posterior_step(
    st: &NoisedLabel,
    s0_hat: &[f64],
    prior: &[f64],
    sched: &DiffusionSchedule,
    noise: &[f64],
) -> Result<NoisedLabel> {
    if st.t == 0 {
        return Err(Error::config("timestep", "cannot step below t = 0"));
    }
    check_lengths("posterior_step", &[st.value.len(), s0_hat.len(), prior.len(), noise.len()])?;
    let c = sched.posterior(st.t)?;
    let sd = c.variance.sqrt();
    let value = s0_hat
        .iter()
        .zip(&st.value)
        .zip(prior)
        .zip(noise)
        .map(|(((s0, s), f), e)| c.gamma0 * s0 + c.gamma1 * s + c.gamma2 * f + sd * e)
        .collect();
    Ok(NoisedLabel { t: st.t - 1, value })
}

/// Row-wise [`forward_sample`] with a per-row timestep.
pub fn forward_sample_batch(
    s0: &Matrix,
    prior: &Matrix,
    timesteps: &[usize],
    noise: &Matrix,
    sched: &DiffusionSchedule,
) -> Result<Matrix> {
    if s0.shape() != prior.shape() || s0.shape() != noise.shape() || timesteps.len() != s0.rows() {
        return Err(Error::shape(
            "forward_sample_batch",
            format!("s0 {:?}, prior {:?}, noise {:?}, {} timesteps", s0.shape(), prior.shape(), noise.shape(), timesteps.len()),
        ));
    }
    let mut out = Matrix::zeros(s0.rows(), s0.cols());
    for (r, &t) in timesteps.iter().enumerate() {
        let row = forward_sample(s0.row(r), prior.row(r), t, noise.row(r), sched)?;
        out.row_mut(r).copy_from_slice(&row.value);
    }
    Ok(out)
}

/// Row-wise [`predict_s0`] at a shared timestep.
pub fn predict_s0_batch(st: &Matrix, t: usize, prior: &Matrix, eps_hat: &Matrix, sched: &DiffusionSchedule) -> Result<Matrix> {
    if st.shape() != prior.shape() || st.shape() != eps_hat.shape() {
        return Err(Error::shape("predict_s0_batch", format!("{:?}, {:?}, {:?}", st.shape(), prior.shape(), eps_hat.shape())));
    }
    let mut out = Matrix::zeros(st.rows(), st.cols());
    for r in 0..st.rows() {
        let noised = NoisedLabel { t, value: st.row(r).to_vec() };
        out.row_mut(r).copy_from_slice(&predict_s0(&noised, prior.row(r), eps_hat.row(r), sched)?);
    }
    Ok(out)
}
