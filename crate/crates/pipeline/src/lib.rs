//! End-to-end pipeline: synthetic cohort generation, lung pre-registration,
//! contrastive pretraining, residual-diffusion training, generation
//! evaluation, the four-variant ablation matrix, and diagnostic evaluation.

pub mod ablation;
pub mod clip_stage;
pub mod config;
pub mod diagnose;
pub mod error;
pub mod evaluate;
pub mod runman;
pub mod runner;
pub mod split;
pub mod stages;
pub mod train;

pub use config::{RunConfig, Variant};
pub use error::{PipelineError, Result};
