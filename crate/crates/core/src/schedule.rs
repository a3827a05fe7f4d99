//! Shifting schedule for the residual diffusion bridge and the linear-beta
//! schedule for the standard-diffusion baseline.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_STEPS: usize = 15;
pub const DEFAULT_ETA_FIRST: f64 = 0.002;
pub const DEFAULT_ETA_LAST: f64 = 0.999;
pub const DEFAULT_NOISE_SCALE: f64 = 1.0;

/// The shifting sequence {eta_t} with eta_0 = 0, plus the noise scale k.
///
/// eta is strictly increasing with eta_1 <= 0.01 and eta_T >= 0.99, so the
/// bridge starts essentially at the target and ends essentially at the
/// conditioning image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    steps: usize,
    noise_scale: f64,
    eta: Vec<f64>,
}

impl Schedule {
    /// Geometric interpolation eta_t = eta_1 * (eta_T / eta_1)^((t-1)/(T-1)).
    pub fn geometric(steps: usize, eta_first: f64, eta_last: f64, noise_scale: f64) -> Result<Self> {
        if steps < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        if !(eta_first > 0.0 && eta_first < eta_last && eta_last <= 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "schedule needs 0 < eta_first < eta_last <= 1, got {eta_first} and {eta_last}"
            )));
        }
        if !(noise_scale > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "noise scale must be positive, got {noise_scale}"
            )));
        }
        let mut eta = Vec::with_capacity(steps + 1);
        eta.push(0.0);
        let ratio = eta_last / eta_first;
        for t in 1..=steps {
            let frac = (t - 1) as f64 / (steps - 1) as f64;
            eta.push(eta_first * ratio.powf(frac));
        }
        let s = Self {
            steps,
            noise_scale,
            eta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn default_residual() -> Self {
        Self::geometric(
            DEFAULT_STEPS,
            DEFAULT_ETA_FIRST,
            DEFAULT_ETA_LAST,
            DEFAULT_NOISE_SCALE,
        )
        .expect("default schedule is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta.len() != self.steps + 1 {
            return Err(CoreError::InvalidArgument(
                "schedule length does not match step count".into(),
            ));
        }
        if self.eta[0] != 0.0 {
            return Err(CoreError::InvalidArgument("eta_0 must be exactly 0".into()));
        }
        for t in 1..self.eta.len() {
            if !(self.eta[t] > self.eta[t - 1]) {
                return Err(CoreError::InvalidArgument(format!(
                    "eta must be strictly increasing, violated at t={t}"
                )));
            }
        }
        if self.eta[1] > 0.01 {
            return Err(CoreError::InvalidArgument(format!(
                "eta_1 must be <= 0.01, got {}",
                self.eta[1]
            )));
        }
        if self.eta[self.steps] < 0.99 {
            return Err(CoreError::InvalidArgument(format!(
                "eta_T must be >= 0.99, got {}",
                self.eta[self.steps]
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// eta_t for t in 0..=T.
    pub fn eta(&self, t: usize) -> f64 {
        self.eta[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(CoreError::InvalidArgument(format!(
                "timestep {t} out of range 1..={}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Linear-beta schedule for the standard-diffusion ablation baseline,
/// exposing the cumulative products alpha_bar_t with alpha_bar_0 = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    steps: usize,
    alpha_bar: Vec<f64>,
}

/// Defaults chosen so that at short chains alpha_bar_T is ~1e-6 and the
/// terminal forward marginal is indistinguishable from a standard normal.
pub const DEFAULT_BETA_FIRST: f64 = 0.05;
pub const DEFAULT_BETA_LAST: f64 = 0.95;

impl BetaSchedule {
    pub fn linear(steps: usize, beta_first: f64, beta_last: f64) -> Result<Self> {
        if steps < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "beta schedule needs at least 2 steps, got {steps}"
            )));
        }
        if !(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "beta schedule needs 0 < beta_first <= beta_last < 1, got {beta_first} and {beta_last}"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut prod = 1.0;
        for t in 0..steps {
            let beta = beta_first + (beta_last - beta_first) * t as f64 / (steps - 1) as f64;
            prod *= 1.0 - beta;
            alpha_bar.push(prod);
        }
        Ok(Self { steps, alpha_bar })
    }

    pub fn default_baseline(steps: usize) -> Result<Self> {
        Self::linear(steps, DEFAULT_BETA_FIRST, DEFAULT_BETA_LAST)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// alpha_bar_t for t in 0..=T; alpha_bar_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(CoreError::InvalidArgument(format!(
                "timestep {t} out of range 1..={}",
                self.steps
            )));
        }
        Ok(())
    }
}
