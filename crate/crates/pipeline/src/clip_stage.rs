//! Contrastive pretraining stage: align record-text and initial-scan
//! embeddings over training-split pairs only, then freeze the text encoder
//! for reverse-process conditioning.

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use crate::split::Split;
use crate::stages::{read_dataset, stage_seed};
use ciresdiff_core::rvol;
use ciresdiff_core::volume::{resample_trilinear, Volume};
use ciresdiff_nn::checkpoint::{load_checkpoint, save_checkpoint};
use ciresdiff_nn::clip::{retrieval_eval, ClipConfig, ClipPair, ClipReport, ClipTrainer};
use ciresdiff_nn::denoiser::volume_to_tensor;
use ciresdiff_nn::encoders::{TextEncoder, TextEncoderConfig};
use serde::{Deserialize, Serialize};

/// Encoder inputs are downsampled to at most this many voxels per axis.
pub const CLIP_IMAGE_MAX_DIM: usize = 24;

pub const TEXT_ENCODER_FILE: &str = "text_encoder.ckpt";
pub const IMAGE_ENCODER_FILE: &str = "image_encoder.ckpt";
pub const CLIP_REPORT_FILE: &str = "clip_report.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct ClipStageReport {
    pub trained_on: usize,
    pub holdout: usize,
    pub report: ClipReport,
}

fn encoder_image(volume: &Volume) -> Result<ciresdiff_nn::tensor::Tensor> {
    let dims = volume.dims();
    let max_dim = dims.iter().copied().max().unwrap_or(1);
    let v = if max_dim > CLIP_IMAGE_MAX_DIM {
        let factor = (max_dim as f64 / CLIP_IMAGE_MAX_DIM as f64).ceil();
        let sp = volume.spacing();
        resample_trilinear(volume, [sp[0] * factor, sp[1] * factor, sp[2] * factor])?
    } else {
        volume.clone()
    };
    Ok(volume_to_tensor(&v))
}

pub fn pretrain_stage(cfg: &RunConfig, split: &Split) -> Result<ClipStageReport> {
    let entries = read_dataset(cfg)?;
    split.assert_disjoint()?;
    // Pretraining pairs come exclusively from the training split; any test
    // id in the requested set is a hard error.
    split.assert_train_only(&split.train)?;

    let holdout = cfg.clip_holdout.min(split.train.len().saturating_sub(2));
    let (train_ids, holdout_ids) = split
        .train
        .split_at(split.train.len() - holdout);

    let data_dir = cfg.data_dir();
    let build_pairs = |ids: &[usize]| -> Result<Vec<ClipPair>> {
        let mut pairs = Vec::with_capacity(ids.len());
        for &id in ids {
            let entry = entries
                .iter()
                .find(|e| e.id == id)
                .ok_or_else(|| PipelineError::Other(format!("sample id {id} not in manifest")))?;
            let initial = rvol::load_volume(entry.initial_path(&data_dir))?;
            pairs.push(ClipPair::new(&entry.record_text, encoder_image(&initial)?));
        }
        Ok(pairs)
    };
    let train_pairs = build_pairs(train_ids)?;
    let holdout_pairs = build_pairs(holdout_ids)?;

    let clip_cfg = ClipConfig {
        embed_dim: cfg.text_dim,
        learning_rate: cfg.clip_learning_rate,
        epochs: cfg.clip_epochs,
        batch_size: cfg.clip_batch,
        seed: stage_seed(cfg.master_seed, "pretrain-clip"),
        ..ClipConfig::default()
    };
    let mut trainer = ClipTrainer::new(clip_cfg);
    let mut report = trainer.train(&train_pairs)?;

    let eval_pairs = if holdout_pairs.len() >= 2 {
        &holdout_pairs
    } else {
        &train_pairs
    };
    let (top1, gap) = retrieval_eval(&trainer.text, &trainer.image, eval_pairs, 32);
    report.retrieval_top1 = Some(top1);
    report.cosine_gap = Some(gap);

    let dir = cfg.clip_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&dir, e)))?;
    save_checkpoint(
        dir.join(TEXT_ENCODER_FILE),
        "text-encoder",
        &trainer.text.config,
        &trainer.text.params.flat(),
    )?;
    save_checkpoint(
        dir.join(IMAGE_ENCODER_FILE),
        "image-encoder",
        &trainer.image.config,
        &trainer.image.params.flat(),
    )?;
    let stage_report = ClipStageReport {
        trained_on: train_pairs.len(),
        holdout: holdout_pairs.len(),
        report,
    };
    let json = serde_json::to_string_pretty(&stage_report)
        .map_err(|e| PipelineError::Other(format!("clip report: {e}")))?;
    std::fs::write(dir.join(CLIP_REPORT_FILE), json)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir.join(CLIP_REPORT_FILE), e)))?;
    Ok(stage_report)
}

/// Load the frozen text encoder written by the pretraining stage.
pub fn load_text_encoder(cfg: &RunConfig) -> Result<TextEncoder> {
    let path = cfg.clip_dir().join(TEXT_ENCODER_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            stage: "pretrain-clip".into(),
            path,
        });
    }
    let (config, params): (TextEncoderConfig, Vec<f64>) = load_checkpoint(&path, "text-encoder")?;
    let mut enc = TextEncoder::new(config);
    enc.params.set_flat(&params);
    Ok(enc)
}
