//! Stage wrappers around training, sampling, and evaluation for one
//! configured variant, with checkpoint and report persistence.

use crate::clip_stage::load_text_encoder;
use crate::config::{RunConfig, Variant};
use crate::error::{PipelineError, Result};
use crate::evaluate::{
    evaluate_generation, masked_metrics, sample_volume, summarize, EvalOutputs, EvalReport,
    SampleRow,
};
use crate::split::Split;
use crate::stages::{load_registered, stage_seed, RegisteredPair};
use crate::train::{denoiser_config, train_denoiser, TrainPair, TrainReport};
use ciresdiff_core::dataset::derive_seed;
use ciresdiff_core::rvol;
use ciresdiff_nn::checkpoint::{load_checkpoint, save_checkpoint};
use ciresdiff_nn::denoiser::{Denoiser, DenoiserConfig};
use std::io::Write;
use std::path::Path;

pub const DENOISER_FILE: &str = "denoiser.ckpt";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

/// Pooled embeddings for every pair when the variant is conditioned.
fn conditioning_for(
    cfg: &RunConfig,
    variant: Variant,
    pairs: &[RegisteredPair],
) -> Result<Vec<Option<Vec<f64>>>> {
    if !variant.conditioned() {
        return Ok(vec![None; pairs.len()]);
    }
    let encoder = load_text_encoder(cfg)?;
    Ok(pairs
        .iter()
        .map(|p| Some(encoder.encode(&p.entry.record_text).pooled))
        .collect())
}

pub fn prepare_train_pairs(
    cfg: &RunConfig,
    variant: Variant,
    split: &Split,
) -> Result<Vec<TrainPair>> {
    split.assert_disjoint()?;
    split.assert_train_only(&split.train)?;
    let registered = load_registered(cfg, &split.train)?;
    let conditioning = conditioning_for(cfg, variant, &registered)?;
    Ok(registered
        .iter()
        .zip(conditioning)
        .map(|(p, c)| TrainPair::from_registered(p, c))
        .collect())
}

pub fn prepare_eval_pairs(
    cfg: &RunConfig,
    variant: Variant,
    ids: &[usize],
) -> Result<Vec<(RegisteredPair, Option<Vec<f64>>)>> {
    let registered = load_registered(cfg, ids)?;
    let conditioning = conditioning_for(cfg, variant, &registered)?;
    Ok(registered.into_iter().zip(conditioning).collect())
}

/// Train the configured variant and persist checkpoint plus report.
pub fn train_stage(cfg: &RunConfig, variant: Variant, split: &Split) -> Result<TrainReport> {
    let pairs = prepare_train_pairs(cfg, variant, split)?;
    let seed = stage_seed(cfg.master_seed, "train");
    let (model, report) = train_denoiser(cfg, variant, &pairs, seed)?;
    let dir = cfg.train_dir(variant);
    std::fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&dir, e)))?;
    save_checkpoint(
        dir.join(DENOISER_FILE),
        "denoiser",
        &model.config,
        &model.params.flat(),
    )?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineError::Other(format!("train report: {e}")))?;
    std::fs::write(dir.join(TRAIN_REPORT_FILE), json)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir.join(TRAIN_REPORT_FILE), e)))?;
    Ok(report)
}

pub fn load_denoiser(cfg: &RunConfig, variant: Variant) -> Result<Denoiser> {
    let path = cfg.train_dir(variant).join(DENOISER_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            stage: "train".into(),
            path,
        });
    }
    let (config, params): (DenoiserConfig, Vec<f64>) = load_checkpoint(&path, "denoiser")?;
    let expected = denoiser_config(cfg, variant);
    if config != expected {
        return Err(PipelineError::Config(format!(
            "checkpoint architecture {config:?} does not match configuration {expected:?}"
        )));
    }
    let mut model = Denoiser::new(config);
    model.params.set_flat(&params);
    Ok(model)
}

/// Generate prediction volumes for the test split.
pub fn sample_stage(cfg: &RunConfig, variant: Variant, split: &Split) -> Result<()> {
    let model = load_denoiser(cfg, variant)?;
    let pairs = prepare_eval_pairs(cfg, variant, &split.test)?;
    let dir = cfg.samples_dir(variant);
    std::fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&dir, e)))?;
    let seed = stage_seed(cfg.master_seed, "sample");
    for (pair, conditioning) in &pairs {
        let mut pred = sample_volume(
            &model,
            variant,
            cfg,
            &pair.initial,
            conditioning.as_deref(),
            derive_seed(seed, pair.entry.id as u64),
        )?;
        pred.quantize_f32();
        rvol::save_volume(dir.join(format!("pred_{:04}.rvol", pair.entry.id)), &pred)?;
    }
    Ok(())
}

/// Score stored predictions against the true follow-ups inside the merged
/// lung mask; emit per-sample CSV, JSON summary, and difference maps.
pub fn evaluate_stage(cfg: &RunConfig, variant: Variant, split: &Split) -> Result<EvalReport> {
    let pairs = prepare_eval_pairs(cfg, variant, &split.test)?;
    let samples_dir = cfg.samples_dir(variant);
    let eval_dir = cfg.eval_dir(variant);
    std::fs::create_dir_all(&eval_dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&eval_dir, e)))?;

    let mut rows = Vec::with_capacity(pairs.len());
    for (pair, _) in &pairs {
        let pred_path = samples_dir.join(format!("pred_{:04}.rvol", pair.entry.id));
        if !pred_path.exists() {
            return Err(PipelineError::MissingArtifact {
                stage: "sample".into(),
                path: pred_path,
            });
        }
        let pred = rvol::load_volume(&pred_path)?;
        let (p, s) = masked_metrics(&pred, &pair.follow_up, &pair.mask)?;
        let (cp, cs) = masked_metrics(&pair.initial, &pair.follow_up, &pair.mask)?;
        let mut diff = pred.zip_map(&pair.follow_up, |a, b| (a - b).abs())?;
        diff.quantize_f32();
        rvol::save_volume(
            eval_dir.join(format!("diff_{:04}.rvol", pair.entry.id)),
            &diff,
        )?;
        rows.push(SampleRow {
            id: pair.entry.id,
            psnr: p,
            ssim: s,
            copy_psnr: cp,
            copy_ssim: cs,
        });
    }
    let summary = summarize(variant, cfg.fold_index, &rows);
    let report = EvalReport {
        rows: rows.clone(),
        summary,
    };
    write_report(&eval_dir, &report)?;
    Ok(report)
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    let csv_path = dir.join("metrics.csv");
    let mut file = std::fs::File::create(&csv_path)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&csv_path, e)))?;
    writeln!(file, "id,psnr,ssim,copy_psnr,copy_ssim")
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&csv_path, e)))?;
    for r in &report.rows {
        let p = if r.psnr.is_infinite() {
            "inf".to_string()
        } else {
            format!("{}", r.psnr)
        };
        let cp = if r.copy_psnr.is_infinite() {
            "inf".to_string()
        } else {
            format!("{}", r.copy_psnr)
        };
        writeln!(file, "{},{},{},{},{}", r.id, p, r.ssim, cp, r.copy_ssim)
            .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&csv_path, e)))?;
    }
    let json = serde_json::to_string_pretty(&report.summary)
        .map_err(|e| PipelineError::Other(format!("summary: {e}")))?;
    std::fs::write(dir.join("summary.json"), json)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir.join("summary.json"), e)))?;
    Ok(())
}

/// Train + evaluate in memory (no intermediate prediction files); used by
/// the ablation matrix.
pub fn train_and_evaluate(
    cfg: &RunConfig,
    variant: Variant,
    split: &Split,
    train_seed: u64,
    outputs: &EvalOutputs,
) -> Result<(TrainReport, EvalReport)> {
    let pairs = prepare_train_pairs(cfg, variant, split)?;
    let (model, train_report) = train_denoiser(cfg, variant, &pairs, train_seed)?;
    let eval_pairs = prepare_eval_pairs(cfg, variant, &split.test)?;
    let eval_report = evaluate_generation(
        &model,
        variant,
        cfg,
        &eval_pairs,
        cfg.fold_index,
        stage_seed(cfg.master_seed, "sample"),
        outputs,
    )?;
    Ok((train_report, eval_report))
}
