//! Run configuration: a flat `key = value` file with strict validation.
//! Unknown keys are rejected and every invalid field produces a named,
//! line-anchored diagnostic. Environment variables may override paths only
//! (CIRESDIFF_DATA_DIR, CIRESDIFF_OUT_DIR).

use crate::error::{PipelineError, Result};
use ciresdiff_core::phantom::PhantomParams;
use ciresdiff_core::schedule::{BetaSchedule, Schedule};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Dm,
    DmCip,
    DmR,
    DmRCip,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dm, Variant::DmCip, Variant::DmR, Variant::DmRCip];

    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Dm => "DM",
            Variant::DmCip => "DM-CIP",
            Variant::DmR => "DM-R",
            Variant::DmRCip => "DM-R-CIP",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.iter().copied().find(|v| v.tag() == s)
    }

    pub fn residual(&self) -> bool {
        matches!(self, Variant::DmR | Variant::DmRCip)
    }

    pub fn conditioned(&self) -> bool {
        matches!(self, Variant::DmCip | Variant::DmRCip)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    // Diffusion schedule.
    pub steps: usize,
    pub eta_first: f64,
    pub eta_last: f64,
    pub noise_scale: f64,
    pub beta_first: f64,
    pub beta_last: f64,
    // Dataset.
    pub volume_dims: usize,
    pub n_samples: usize,
    pub noise_amplitude: f64,
    // Split.
    pub kfold: usize,
    pub fold_index: usize,
    pub train_count: usize,
    pub test_count: usize,
    // Registration.
    pub dilation_radius: usize,
    // Patching.
    pub patch_size: usize,
    pub patch_stride: usize,
    // Denoiser training.
    pub learning_rate: f64,
    pub train_steps: usize,
    pub batch_size: usize,
    pub base_channels: usize,
    pub time_dim: usize,
    pub token_grid: usize,
    pub text_dim: usize,
    // Contrastive pretraining.
    pub clip_epochs: usize,
    pub clip_batch: usize,
    pub clip_learning_rate: f64,
    pub clip_holdout: usize,
    // Diagnostics.
    pub classifier_epochs: usize,
    pub classifier_learning_rate: f64,
    pub sampler_seeds: usize,
    // Reproducibility and paths.
    pub master_seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::DmR,
            steps: 15,
            eta_first: 0.002,
            eta_last: 0.999,
            noise_scale: 1.0,
            beta_first: 0.05,
            beta_last: 0.95,
            volume_dims: 48,
            n_samples: 80,
            noise_amplitude: 0.03,
            kfold: 0,
            fold_index: 0,
            train_count: 64,
            test_count: 16,
            dilation_radius: 3,
            patch_size: 32,
            patch_stride: 16,
            learning_rate: 0.001,
            train_steps: 1000,
            batch_size: 1,
            base_channels: 8,
            time_dim: 16,
            token_grid: 4,
            text_dim: 32,
            clip_epochs: 120,
            clip_batch: 16,
            clip_learning_rate: 0.003,
            clip_holdout: 0,
            classifier_epochs: 20,
            classifier_learning_rate: 0.003,
            sampler_seeds: 1,
            master_seed: 17,
            data_dir: PathBuf::new(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut diagnostics = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                diagnostics.push(format!("line {lineno}: expected `key = value`, got {raw:?}"));
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            if let Err(msg) = cfg.apply(key, value) {
                diagnostics.push(format!("line {lineno}: {msg}"));
            }
        }
        if let Err(msgs) = cfg.validate() {
            diagnostics.extend(msgs);
        }
        if diagnostics.is_empty() {
            Ok(cfg)
        } else {
            Err(PipelineError::Config(diagnostics.join("\n")))
        }
    }

    fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse::<T>()
                .map_err(|_| format!("invalid value for {key}: {value:?}"))
        }
        match key {
            "variant" => {
                self.variant = Variant::parse(value).ok_or(format!(
                    "invalid value for variant: {value:?} (expected DM, DM-CIP, DM-R, or DM-R-CIP)"
                ))?;
            }
            "steps" => self.steps = num(key, value)?,
            "eta_first" => self.eta_first = num(key, value)?,
            "eta_last" => self.eta_last = num(key, value)?,
            "noise_scale" => self.noise_scale = num(key, value)?,
            "beta_first" => self.beta_first = num(key, value)?,
            "beta_last" => self.beta_last = num(key, value)?,
            "volume_dims" => self.volume_dims = num(key, value)?,
            "n_samples" => self.n_samples = num(key, value)?,
            "noise_amplitude" => self.noise_amplitude = num(key, value)?,
            "kfold" => self.kfold = num(key, value)?,
            "fold_index" => self.fold_index = num(key, value)?,
            "train_count" => self.train_count = num(key, value)?,
            "test_count" => self.test_count = num(key, value)?,
            "dilation_radius" => self.dilation_radius = num(key, value)?,
            "patch_size" => self.patch_size = num(key, value)?,
            "patch_stride" => self.patch_stride = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "train_steps" => self.train_steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "base_channels" => self.base_channels = num(key, value)?,
            "time_dim" => self.time_dim = num(key, value)?,
            "token_grid" => self.token_grid = num(key, value)?,
            "text_dim" => self.text_dim = num(key, value)?,
            "clip_epochs" => self.clip_epochs = num(key, value)?,
            "clip_batch" => self.clip_batch = num(key, value)?,
            "clip_learning_rate" => self.clip_learning_rate = num(key, value)?,
            "clip_holdout" => self.clip_holdout = num(key, value)?,
            "classifier_epochs" => self.classifier_epochs = num(key, value)?,
            "classifier_learning_rate" => self.classifier_learning_rate = num(key, value)?,
            "sampler_seeds" => self.sampler_seeds = num(key, value)?,
            "master_seed" => self.master_seed = num(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key {key}")),
        }
        Ok(())
    }

    /// Applied by the CLI after parsing; environment variables override
    /// paths only, never numerics.
    pub fn apply_env_path_overrides(&mut self) {
        if let Ok(v) = std::env::var("CIRESDIFF_DATA_DIR") {
            if !v.is_empty() {
                self.data_dir = PathBuf::from(v);
            }
        }
        if let Ok(v) = std::env::var("CIRESDIFF_OUT_DIR") {
            if !v.is_empty() {
                self.out_dir = PathBuf::from(v);
            }
        }
    }

    fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.steps < 2 {
            errs.push(format!("steps: must be at least 2, got {}", self.steps));
        }
        if !(self.eta_first > 0.0 && self.eta_first < self.eta_last && self.eta_last <= 1.0) {
            errs.push(format!(
                "eta_first/eta_last: need 0 < eta_first < eta_last <= 1, got {} and {}",
                self.eta_first, self.eta_last
            ));
        } else {
            if self.eta_first > 0.01 {
                errs.push(format!(
                    "eta_first: must be <= 0.01 to keep the first step near the target, got {}",
                    self.eta_first
                ));
            }
            if self.eta_last < 0.99 {
                errs.push(format!(
                    "eta_last: must be >= 0.99 to end near the condition, got {}",
                    self.eta_last
                ));
            }
        }
        if !(self.noise_scale > 0.0) {
            errs.push(format!(
                "noise_scale: must be positive, got {}",
                self.noise_scale
            ));
        }
        if !(self.beta_first > 0.0 && self.beta_first <= self.beta_last && self.beta_last < 1.0) {
            errs.push(format!(
                "beta_first/beta_last: need 0 < beta_first <= beta_last < 1, got {} and {}",
                self.beta_first, self.beta_last
            ));
        }
        if self.volume_dims != 48 && self.volume_dims != 32 {
            errs.push(format!(
                "volume_dims: supported phantom presets are 32 and 48, got {}",
                self.volume_dims
            ));
        }
        if self.n_samples < 2 {
            errs.push(format!(
                "n_samples: need at least 2, got {}",
                self.n_samples
            ));
        }
        if self.kfold == 1 {
            errs.push("kfold: must be 0 (fixed split) or at least 2".into());
        }
        if self.kfold >= 2 {
            if self.fold_index >= self.kfold {
                errs.push(format!(
                    "fold_index: must be below kfold {}, got {}",
                    self.kfold, self.fold_index
                ));
            }
            if self.n_samples < self.kfold {
                errs.push(format!(
                    "kfold: need at least as many samples as folds, got {} samples for {} folds",
                    self.n_samples, self.kfold
                ));
            }
        } else if self.train_count + self.test_count > self.n_samples {
            errs.push(format!(
                "train_count/test_count: {} + {} exceeds n_samples {}",
                self.train_count, self.test_count, self.n_samples
            ));
        }
        if self.patch_size == 0 || self.patch_size % 4 != 0 {
            errs.push(format!(
                "patch_size: must be a positive multiple of 4, got {}",
                self.patch_size
            ));
        }
        if self.patch_size > self.volume_dims {
            errs.push(format!(
                "patch_size: {} exceeds volume_dims {}",
                self.patch_size, self.volume_dims
            ));
        }
        if self.patch_stride == 0 || self.patch_stride > self.patch_size {
            errs.push(format!(
                "patch_stride: must be in 1..=patch_size, got {}",
                self.patch_stride
            ));
        }
        if !(self.learning_rate > 0.0) {
            errs.push(format!(
                "learning_rate: must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            errs.push("batch_size: must be positive".into());
        }
        if self.base_channels == 0 {
            errs.push("base_channels: must be positive".into());
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            errs.push(format!(
                "time_dim: must be even and at least 2, got {}",
                self.time_dim
            ));
        }
        if self.token_grid == 0 || self.token_grid > self.patch_size / 4 {
            errs.push(format!(
                "token_grid: must be in 1..=patch_size/4, got {}",
                self.token_grid
            ));
        }
        if self.clip_batch < 2 {
            errs.push("clip_batch: must be at least 2".into());
        }
        if self.sampler_seeds == 0 {
            errs.push("sampler_seeds: must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Ok(Schedule::geometric(
            self.steps,
            self.eta_first,
            self.eta_last,
            self.noise_scale,
        )?)
    }

    pub fn beta_schedule(&self) -> Result<BetaSchedule> {
        Ok(BetaSchedule::linear(
            self.steps,
            self.beta_first,
            self.beta_last,
        )?)
    }

    pub fn phantom_params(&self) -> PhantomParams {
        let mut p = if self.volume_dims == 32 {
            PhantomParams::desk_small()
        } else {
            PhantomParams::default()
        };
        p.noise_amplitude = self.noise_amplitude;
        p
    }

    /// Resolved dataset directory (defaults to `<out_dir>/data`).
    pub fn data_dir(&self) -> PathBuf {
        if self.data_dir.as_os_str().is_empty() {
            self.out_dir.join("data")
        } else {
            self.data_dir.clone()
        }
    }

    pub fn registered_dir(&self) -> PathBuf {
        self.out_dir.join("registered")
    }

    pub fn clip_dir(&self) -> PathBuf {
        self.out_dir.join("clip")
    }

    pub fn train_dir(&self, variant: Variant) -> PathBuf {
        self.out_dir.join("train").join(variant.tag())
    }

    pub fn samples_dir(&self, variant: Variant) -> PathBuf {
        self.out_dir.join("samples").join(variant.tag())
    }

    pub fn eval_dir(&self, variant: Variant) -> PathBuf {
        self.out_dir.join("eval").join(variant.tag())
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.out_dir.join("ablation")
    }

    pub fn diagnosis_dir(&self) -> PathBuf {
        self.out_dir.join("diagnosis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gets_defaults() {
        let cfg = RunConfig::parse_str("").unwrap();
        assert_eq!(cfg.steps, 15);
        assert_eq!(cfg.eta_first, 0.002);
        assert_eq!(cfg.eta_last, 0.999);
        assert_eq!(cfg.noise_scale, 1.0);
        assert_eq!(cfg.variant, Variant::DmR);
    }

    #[test]
    fn comments_and_values_parse() {
        let cfg = RunConfig::parse_str(
            "# a comment\nvariant = DM-R-CIP\nsteps = 10  # inline\npatch_size = 16\npatch_stride=8\n",
        )
        .unwrap();
        assert_eq!(cfg.variant, Variant::DmRCip);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.patch_size, 16);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = RunConfig::parse_str("foo = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
        assert!(msg.contains("unknown key foo"), "{msg}");
    }

    #[test]
    fn inverted_eta_names_both_keys() {
        let err = RunConfig::parse_str("eta_first = 0.9\neta_last = 0.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("eta_first"), "{msg}");
        assert!(msg.contains("eta_last"), "{msg}");
    }

    #[test]
    fn multiple_diagnostics_are_collected() {
        let err = RunConfig::parse_str("steps = banana\nnope = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1: invalid value for steps"), "{msg}");
        assert!(msg.contains("line 2: unknown key nope"), "{msg}");
    }

    #[test]
    fn split_overflow_is_rejected() {
        let err = RunConfig::parse_str("n_samples = 10\ntrain_count = 9\ntest_count = 2\n")
            .unwrap_err();
        assert!(err.to_string().contains("exceeds n_samples"));
    }
}
