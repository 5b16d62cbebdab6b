use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Variance schedule for `t = 1..=T`, with the derived `α_t = 1 − β_t`,
/// cumulative `ᾱ_t = ∏_{s≤t} α_s` and posterior variance
/// `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t`, where `ᾱ_0 = 1`.
///
/// Accessors take the 1-based timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

/// Posterior mixing weights for a jump from `S_t` to `S_s` (`s < t`):
/// `S_s = γ0·Ŝ0 + γ1·S_t + γ2·prior + √variance·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoefficients {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub variance: f64,
}

impl PosteriorCoefficients {
    /// Weights from the two cumulative products and the per-jump `α` of the
    /// span (`α_t` for a single step).
    fn from_products(alpha_bar_t: f64, alpha_bar_s: f64, alpha_span: f64) -> Self {
        let beta_span = 1.0 - alpha_span;
        let denom = 1.0 - alpha_bar_t;
        let sqrt_span = alpha_span.sqrt();
        let sqrt_bar_s = alpha_bar_s.sqrt();
        Self {
            gamma0: beta_span * sqrt_bar_s / denom,
            gamma1: (1.0 - alpha_bar_s) * sqrt_span / denom,
            gamma2: 1.0 + (alpha_bar_t.sqrt() - 1.0) * (sqrt_span + sqrt_bar_s) / denom,
            variance: ((1.0 - alpha_bar_s) / denom * beta_span).max(0.0),
        }
    }
}

impl DiffusionSchedule {
    /// β linearly interpolated from `beta_start` (t = 1) to `beta_end` (t = T).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::config(
                "beta",
                format!("need 0 < beta_start ≤ beta_end < 1, got {beta_start} and {beta_end}"),
            ));
        }
        let beta = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(beta)
    }

    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::config("beta", format!("{b} is outside (0, 1)")));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut beta_tilde = Vec::with_capacity(beta.len());
        let mut prev = 1.0;
        for (a, b) in alpha.iter().zip(&beta) {
            let cur = prev * a;
            beta_tilde.push((1.0 - prev) / (1.0 - cur) * b);
            alpha_bar.push(cur);
            prev = cur;
        }
        Ok(Self { beta, alpha, alpha_bar, beta_tilde })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::config("timestep", format!("{t} is outside 1..={}", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta_tildes(&self) -> &[f64] {
        &self.beta_tilde
    }

    /// Coefficients of the Gaussian posterior `q(S_{t−1} | S_t, S_0, prior)`.
    pub fn posterior(&self, t: usize) -> Result<PosteriorCoefficients> {
        self.check_t(t)?;
        let mut c = PosteriorCoefficients::from_products(self.alpha_bar(t), self.alpha_bar(t - 1), self.alpha(t));
        c.variance = self.beta_tilde(t);
        Ok(c)
    }

    /// Coefficients for a skip from `t` straight to `s < t`, treating the span as
    /// a single step with `α = ᾱ_t / ᾱ_s`. Jumping to `s = 0` returns `Ŝ0` exactly.
    pub fn posterior_jump(&self, t: usize, s: usize) -> Result<PosteriorCoefficients> {
        self.check_t(t)?;
        if s >= t {
            return Err(Error::config("trajectory", format!("jump {t} → {s} does not decrease")));
        }
        if s + 1 == t {
            return self.posterior(t);
        }
        let (bar_t, bar_s) = (self.alpha_bar(t), self.alpha_bar(s));
        Ok(PosteriorCoefficients::from_products(bar_t, bar_s, bar_t / bar_s))
    }
}

/// Linear schedule; see [`DiffusionSchedule::linear`].
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    DiffusionSchedule::linear(steps, beta_start, beta_end)
}
