//! Pipeline orchestration with content-hash change tracking: stages run in
//! dependency order, each records the hash of its configuration slice plus
//! upstream outputs, and unchanged stages are skipped on re-runs.

use crate::ablation::run_ablation;
use crate::clip_stage::pretrain_stage;
use crate::config::RunConfig;
use crate::diagnose::diagnostic_eval;
use crate::error::{PipelineError, Result};
use crate::runner::{
    evaluate_stage, load_denoiser, prepare_eval_pairs, sample_stage, train_stage,
};
use crate::split::{fixed_split, kfold_round, Split};
use crate::stages::{gen_data_stage, load_registered, read_dataset, register_stage, stage_seed};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenData,
    Register,
    PretrainClip,
    Train,
    Sample,
    Evaluate,
    Ablate,
    Diagnose,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::GenData,
        Stage::Register,
        Stage::PretrainClip,
        Stage::Train,
        Stage::Sample,
        Stage::Evaluate,
        Stage::Ablate,
        Stage::Diagnose,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::Register => "register",
            Stage::PretrainClip => "pretrain-clip",
            Stage::Train => "train",
            Stage::Sample => "sample",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::Diagnose => "diagnose",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub input_hash: String,
    pub outputs: Vec<OutputEntry>,
    pub unix_time: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub master_seed: u64,
    pub stages: Vec<StageEntry>,
}

pub const MANIFEST_FILE: &str = "run_manifest.json";

impl RunManifest {
    pub fn load(out_dir: &Path) -> RunManifest {
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default()
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::Other(format!("manifest: {e}")))?;
        std::fs::write(&path, json)
            .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&path, e)))?;
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|s| s.name == name)
    }

    fn upsert(&mut self, entry: StageEntry) {
        if let Some(existing) = self.stages.iter_mut().find(|s| s.name == entry.name) {
            *existing = entry;
        } else {
            self.stages.push(entry);
        }
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(path, e)))?;
    Ok(sha_hex(&bytes))
}

/// Hash every regular file under a directory, sorted by path.
fn hash_dir_outputs(dir: &Path) -> Result<Vec<OutputEntry>> {
    let mut files = Vec::new();
    if dir.exists() {
        collect_files(dir, &mut files)?;
    }
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        out.push(OutputEntry {
            hash: hash_file(&f)?,
            path: f.to_string_lossy().into_owned(),
        });
    }
    Ok(out)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let rd = std::fs::read_dir(dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir, e)))?;
    for entry in rd {
        let entry = entry.map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(dir, e)))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn outputs_intact(outputs: &[OutputEntry]) -> bool {
    !outputs.is_empty()
        && outputs.iter().all(|o| {
            let p = Path::new(&o.path);
            p.exists() && hash_file(p).map(|h| h == o.hash).unwrap_or(false)
        })
}

/// Configuration slice relevant to each stage; upstream output hashes are
/// mixed in so changes propagate downstream.
fn stage_input_hash(cfg: &RunConfig, stage: Stage, manifest: &RunManifest) -> String {
    let mut h = Sha256::new();
    h.update(stage.name().as_bytes());
    h.update(stage_seed(cfg.master_seed, stage.name()).to_le_bytes());
    let mut mix = |v: &str| h.update(v.as_bytes());
    let split_keys = format!(
        "{}|{}|{}|{}|{}",
        cfg.kfold, cfg.fold_index, cfg.train_count, cfg.test_count, cfg.master_seed
    );
    match stage {
        Stage::GenData => {
            mix(&format!(
                "{}|{}|{}",
                cfg.n_samples, cfg.volume_dims, cfg.noise_amplitude
            ));
        }
        Stage::Register => {
            mix(&format!("{}", cfg.dilation_radius));
        }
        Stage::PretrainClip => {
            mix(&split_keys);
            mix(&format!(
                "{}|{}|{}|{}|{}",
                cfg.text_dim, cfg.clip_epochs, cfg.clip_batch, cfg.clip_learning_rate, cfg.clip_holdout
            ));
        }
        Stage::Train => {
            mix(&split_keys);
            mix(&train_keys(cfg));
            mix(cfg.variant.tag());
        }
        Stage::Sample => {
            mix(&split_keys);
            mix(&format!("{}|{}", cfg.patch_size, cfg.patch_stride));
            mix(cfg.variant.tag());
        }
        Stage::Evaluate => {
            mix(&split_keys);
            mix(cfg.variant.tag());
        }
        Stage::Ablate => {
            mix(&split_keys);
            mix(&train_keys(cfg));
        }
        Stage::Diagnose => {
            mix(&split_keys);
            mix(&format!(
                "{}|{}|{}|{}",
                cfg.classifier_epochs, cfg.classifier_learning_rate, cfg.sampler_seeds, cfg.variant.tag()
            ));
        }
    }
    for dep in dependencies(stage) {
        if let Some(entry) = manifest.stage(dep.name()) {
            for o in &entry.outputs {
                h.update(o.hash.as_bytes());
            }
        }
    }
    format!("{:x}", h.finalize())
}

fn train_keys(cfg: &RunConfig) -> String {
    format!(
        "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
        cfg.steps,
        cfg.eta_first,
        cfg.eta_last,
        cfg.noise_scale,
        cfg.beta_first,
        cfg.beta_last,
        cfg.patch_size,
        cfg.patch_stride,
        cfg.learning_rate,
        cfg.train_steps,
        cfg.batch_size,
        cfg.base_channels,
    )
}

fn dependencies(stage: Stage) -> &'static [Stage] {
    match stage {
        Stage::GenData => &[],
        Stage::Register => &[Stage::GenData],
        Stage::PretrainClip => &[Stage::GenData],
        Stage::Train => &[Stage::Register, Stage::PretrainClip],
        Stage::Sample => &[Stage::Train],
        Stage::Evaluate => &[Stage::Sample, Stage::Register],
        Stage::Ablate => &[Stage::Register, Stage::PretrainClip],
        Stage::Diagnose => &[Stage::Train, Stage::Register],
    }
}

fn stage_output_dirs(cfg: &RunConfig, stage: Stage) -> Vec<PathBuf> {
    match stage {
        Stage::GenData => vec![cfg.data_dir()],
        Stage::Register => vec![cfg.registered_dir()],
        Stage::PretrainClip => vec![cfg.clip_dir()],
        Stage::Train => vec![cfg.train_dir(cfg.variant)],
        Stage::Sample => vec![cfg.samples_dir(cfg.variant)],
        Stage::Evaluate => vec![cfg.eval_dir(cfg.variant)],
        Stage::Ablate => vec![cfg.ablation_dir()],
        Stage::Diagnose => vec![cfg.diagnosis_dir()],
    }
}

pub fn active_split(cfg: &RunConfig) -> Result<Split> {
    let entries = read_dataset(cfg)?;
    if cfg.kfold >= 2 {
        kfold_round(&entries, cfg.kfold, cfg.fold_index, stage_seed(cfg.master_seed, "split"))
    } else {
        fixed_split(
            &entries,
            cfg.train_count,
            cfg.test_count,
            stage_seed(cfg.master_seed, "split"),
        )
    }
}

pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<()> {
    match stage {
        Stage::GenData => {
            gen_data_stage(cfg)?;
        }
        Stage::Register => {
            register_stage(cfg)?;
        }
        Stage::PretrainClip => {
            let split = active_split(cfg)?;
            pretrain_stage(cfg, &split)?;
        }
        Stage::Train => {
            let split = active_split(cfg)?;
            train_stage(cfg, cfg.variant, &split)?;
        }
        Stage::Sample => {
            let split = active_split(cfg)?;
            sample_stage(cfg, cfg.variant, &split)?;
        }
        Stage::Evaluate => {
            let split = active_split(cfg)?;
            evaluate_stage(cfg, cfg.variant, &split)?;
        }
        Stage::Ablate => {
            let split = active_split(cfg)?;
            let seed = stage_seed(cfg.master_seed, "ablate");
            run_ablation(cfg, &split, &[seed], Some(&cfg.ablation_dir()))?;
        }
        Stage::Diagnose => {
            let split = active_split(cfg)?;
            let model = load_denoiser(cfg, cfg.variant)?;
            let train_pairs = load_registered(cfg, &split.train)?;
            let test_pairs = prepare_eval_pairs(cfg, cfg.variant, &split.test)?;
            let report = diagnostic_eval(
                cfg,
                cfg.variant,
                &model,
                &train_pairs,
                &test_pairs,
                stage_seed(cfg.master_seed, "diagnose"),
            )?;
            let dir = cfg.diagnosis_dir();
            std::fs::create_dir_all(&dir)
                .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&dir, e)))?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| PipelineError::Other(format!("diagnosis report: {e}")))?;
            std::fs::write(dir.join("diagnosis.json"), json).map_err(|e| {
                PipelineError::Core(ciresdiff_core::CoreError::io(dir.join("diagnosis.json"), e))
            })?;
        }
    }
    Ok(())
}

pub struct PipelineOutcome {
    pub manifest: RunManifest,
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

/// Run the requested stages in dependency order, skipping stages whose
/// inputs are unchanged and whose outputs are intact.
pub fn run_pipeline(cfg: &RunConfig, stages: &[Stage]) -> Result<PipelineOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&cfg.out_dir, e)))?;
    let mut manifest = RunManifest::load(&cfg.out_dir);
    manifest.master_seed = cfg.master_seed;
    let mut executed = Vec::new();
    let mut skipped = Vec::new();

    for stage in Stage::ALL {
        if !stages.contains(&stage) {
            continue;
        }
        let input_hash = stage_input_hash(cfg, stage, &manifest);
        let unchanged = manifest
            .stage(stage.name())
            .map(|e| e.input_hash == input_hash && outputs_intact(&e.outputs))
            .unwrap_or(false);
        if unchanged {
            skipped.push(stage.name());
            continue;
        }
        run_stage(cfg, stage)?;
        let mut outputs = Vec::new();
        for dir in stage_output_dirs(cfg, stage) {
            outputs.extend(hash_dir_outputs(&dir)?);
        }
        manifest.upsert(StageEntry {
            name: stage.name().to_string(),
            input_hash,
            outputs,
            unix_time: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        });
        manifest.save(&cfg.out_dir)?;
        executed.push(stage.name());
    }
    Ok(PipelineOutcome {
        manifest,
        executed,
        skipped,
    })
}
