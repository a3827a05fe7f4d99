//! Residual diffusion bridge: forward marginal sampling, reverse posterior
//! step, and the full sampler, plus the standard-diffusion baseline forward
//! and posterior used by the ablation matrix.
//!
//! Conventions: `x0` is the follow-up image (generation target), `y0` the
//! initial image (condition), `e0 = y0 - x0` the residual. The forward
//! marginal is N(x0 + eta_t * e0, k^2 * eta_t * I); the reverse step mean is
//! (eta_{t-1}/eta_t) * x_t + ((eta_t - eta_{t-1})/eta_t) * x0_hat with
//! variance k^2 * (eta_{t-1}/eta_t) * (eta_t - eta_{t-1}), the unique value
//! consistent with the forward marginals.

use crate::error::{CoreError, Result};
use crate::schedule::{BetaSchedule, Schedule};
use crate::volume::Volume;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// An x0-predicting denoiser. `conditioning` carries an opaque embedding so
/// the math layer stays independent of the network implementation.
pub trait DenoisePredictor {
    fn predict(
        &self,
        x_t: &Volume,
        y0: &Volume,
        t: usize,
        conditioning: Option<&[f64]>,
    ) -> Result<Volume>;
}

/// Draw from q(x_t | x0, y0): x_t = x0 + eta_t * (y0 - x0) + k * sqrt(eta_t) * noise.
pub fn q_sample(
    x0: &Volume,
    y0: &Volume,
    t: usize,
    schedule: &Schedule,
    noise: &Volume,
) -> Result<Volume> {
    x0.check_same_dims(y0, "q_sample x0/y0")?;
    x0.check_same_dims(noise, "q_sample noise")?;
    schedule.check_step(t)?;
    let eta = schedule.eta(t);
    let sigma = schedule.noise_scale() * eta.sqrt();
    let mut out = x0.clone();
    let xv = out.voxels_mut();
    for ((v, &y), &n) in xv.iter_mut().zip(y0.voxels()).zip(noise.voxels()) {
        *v += eta * (y - *v) + sigma * n;
    }
    Ok(out)
}

/// One reverse step: returns mu + sigma * noise. At t = 1 the step collapses
/// to exactly x0_hat with zero variance because eta_0 = 0.
pub fn posterior_step(
    x_t: &Volume,
    x0_hat: &Volume,
    t: usize,
    schedule: &Schedule,
    noise: &Volume,
) -> Result<Volume> {
    x_t.check_same_dims(x0_hat, "posterior_step x_t/x0_hat")?;
    x_t.check_same_dims(noise, "posterior_step noise")?;
    schedule.check_step(t)?;
    let (coeff_prev, coeff_hat, sigma) = posterior_coefficients(schedule, t);
    let mut out = x_t.clone();
    let ov = out.voxels_mut();
    for ((v, &h), &n) in ov.iter_mut().zip(x0_hat.voxels()).zip(noise.voxels()) {
        *v = coeff_prev * *v + coeff_hat * h + sigma * n;
    }
    Ok(out)
}

/// (coefficient on x_t, coefficient on x0_hat, noise std) for step t.
pub fn posterior_coefficients(schedule: &Schedule, t: usize) -> (f64, f64, f64) {
    let eta_t = schedule.eta(t);
    let eta_prev = schedule.eta(t - 1);
    let k = schedule.noise_scale();
    let ratio = eta_prev / eta_t;
    let variance = k * k * ratio * (eta_t - eta_prev);
    (ratio, 1.0 - ratio, variance.sqrt())
}

fn gaussian_like(reference: &Volume, rng: &mut ChaCha8Rng) -> Volume {
    let mut v = Volume::zeros(reference.dims(), reference.spacing());
    for x in v.voxels_mut() {
        *x = standard_normal(rng);
    }
    v
}

/// Box-Muller standard normal; avoids distribution-crate version drift in
/// deterministic pipelines.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Full reverse chain: x_T = y0 + k * eps, then T posterior steps, returning
/// the final x0 estimate clamped to [0, 1]. Makes exactly T model calls.
pub fn sample(
    y0: &Volume,
    conditioning: Option<&[f64]>,
    model: &dyn DenoisePredictor,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
) -> Result<Volume> {
    let steps = schedule.steps();
    let k = schedule.noise_scale();
    let init_noise = gaussian_like(y0, rng);
    let mut x = y0.zip_map(&init_noise, |y, n| y + k * n)?;
    for t in (1..=steps).rev() {
        let x0_hat = model.predict(&x, y0, t, conditioning)?;
        x0_hat.check_same_dims(y0, "model prediction")?;
        let noise = if t > 1 {
            gaussian_like(y0, rng)
        } else {
            Volume::zeros(y0.dims(), y0.spacing())
        };
        x = posterior_step(&x, &x0_hat, t, schedule, &noise)?;
    }
    Ok(x.map(|v| v.clamp(0.0, 1.0)))
}

/// Standard-diffusion forward draw: x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * noise.
/// At t = 0 this is x0 exactly.
pub fn dm_baseline_q_sample(
    x0: &Volume,
    t: usize,
    betas: &BetaSchedule,
    noise: &Volume,
) -> Result<Volume> {
    x0.check_same_dims(noise, "dm_baseline_q_sample noise")?;
    if t > betas.steps() {
        return Err(CoreError::InvalidArgument(format!(
            "timestep {t} out of range 0..={}",
            betas.steps()
        )));
    }
    let ab = betas.alpha_bar(t);
    let scale_x = ab.sqrt();
    let scale_n = (1.0 - ab).sqrt();
    x0.zip_map(noise, |x, n| scale_x * x + scale_n * n)
}

/// Standard posterior q(x_{t-1} | x_t, x0_hat) with the x0 parameterization.
/// At t = 1 it returns x0_hat exactly.
pub fn dm_baseline_posterior_step(
    x_t: &Volume,
    x0_hat: &Volume,
    t: usize,
    betas: &BetaSchedule,
    noise: &Volume,
) -> Result<Volume> {
    x_t.check_same_dims(x0_hat, "dm posterior x_t/x0_hat")?;
    x_t.check_same_dims(noise, "dm posterior noise")?;
    betas.check_step(t)?;
    let ab_t = betas.alpha_bar(t);
    let ab_prev = betas.alpha_bar(t - 1);
    let alpha_t = ab_t / ab_prev;
    let beta_t = 1.0 - alpha_t;
    let coeff_hat = ab_prev.sqrt() * beta_t / (1.0 - ab_t);
    let coeff_xt = alpha_t.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t);
    let variance = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t;
    let sigma = variance.sqrt();
    let mut out = x_t.clone();
    let ov = out.voxels_mut();
    for ((v, &h), &n) in ov.iter_mut().zip(x0_hat.voxels()).zip(noise.voxels()) {
        *v = coeff_xt * *v + coeff_hat * h + sigma * n;
    }
    Ok(out)
}

/// Reverse chain for the standard baseline: x_T is pure noise and every step
/// conditions on y0 through the model input channels only.
pub fn dm_baseline_sample(
    y0: &Volume,
    conditioning: Option<&[f64]>,
    model: &dyn DenoisePredictor,
    betas: &BetaSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Volume> {
    let steps = betas.steps();
    let mut x = gaussian_like(y0, rng);
    for t in (1..=steps).rev() {
        let x0_hat = model.predict(&x, y0, t, conditioning)?;
        x0_hat.check_same_dims(y0, "model prediction")?;
        let noise = if t > 1 {
            gaussian_like(y0, rng)
        } else {
            Volume::zeros(y0.dims(), y0.spacing())
        };
        x = dm_baseline_posterior_step(&x, &x0_hat, t, betas, &noise)?;
    }
    Ok(x.map(|v| v.clamp(0.0, 1.0)))
}
