//! Dataset generation and registration stages, plus loaders for the
//! registered artifacts consumed by training and evaluation.

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use ciresdiff_core::dataset::{self, ManifestEntry};
use ciresdiff_core::mask::Mask;
use ciresdiff_core::prereg::{preregister_pair, PreregOptions, PreregReport};
use ciresdiff_core::rvol;
use ciresdiff_core::volume::Volume;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Per-stage seeds via a labeled hash of (master seed, stage name), so new
/// stages never perturb existing ones.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest length"))
}

pub fn gen_data_stage(cfg: &RunConfig) -> Result<Vec<ManifestEntry>> {
    let params = cfg.phantom_params();
    let seed = stage_seed(cfg.master_seed, "gen-data");
    let entries = dataset::write_dataset(cfg.n_samples, &params, cfg.data_dir(), seed)?;
    Ok(entries)
}

pub fn read_dataset(cfg: &RunConfig) -> Result<Vec<ManifestEntry>> {
    let dir = cfg.data_dir();
    let manifest = dir.join(ciresdiff_core::dataset::MANIFEST_NAME);
    if !manifest.exists() {
        return Err(PipelineError::MissingArtifact {
            stage: "gen-data".into(),
            path: manifest,
        });
    }
    Ok(dataset::read_manifest(&dir)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub id: usize,
    #[serde(flatten)]
    pub report: PreregReport,
}

pub const REGISTRATION_REPORT: &str = "registration.jsonl";

fn reg_paths(dir: &Path, id: usize) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("reg_{id:04}_initial.rvol")),
        dir.join(format!("reg_{id:04}_followup.rvol")),
        dir.join(format!("reg_{id:04}_mask.rvol")),
    )
}

/// Align every pair in the dataset and write aligned volumes, the merged
/// lung mask, and a JSON-lines report of per-side transforms and Dice.
pub fn register_stage(cfg: &RunConfig) -> Result<Vec<RegistrationRecord>> {
    let entries = read_dataset(cfg)?;
    let dir = cfg.registered_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&dir, e)))?;
    let opts = PreregOptions {
        dilation_radius: cfg.dilation_radius,
        ..PreregOptions::default()
    };
    let data_dir = cfg.data_dir();
    let mut records = Vec::with_capacity(entries.len());
    for entry in &entries {
        let initial = rvol::load_volume(entry.initial_path(&data_dir))?;
        let follow = rvol::load_volume(entry.follow_up_path(&data_dir))?;
        let result = preregister_pair(&initial, &follow, &opts)?;
        let (pi, pf, pm) = reg_paths(&dir, entry.id);
        let mut aligned_initial = result.aligned_initial;
        let mut aligned_follow = result.aligned_follow_up;
        aligned_initial.quantize_f32();
        aligned_follow.quantize_f32();
        rvol::save_volume(&pi, &aligned_initial)?;
        rvol::save_volume(&pf, &aligned_follow)?;
        rvol::save_volume(&pm, &result.merged_mask.to_volume(initial.spacing()))?;
        records.push(RegistrationRecord {
            id: entry.id,
            report: result.report,
        });
    }
    let report_path = dir.join(REGISTRATION_REPORT);
    let mut file = std::fs::File::create(&report_path)
        .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&report_path, e)))?;
    for r in &records {
        let line = serde_json::to_string(r)
            .map_err(|e| PipelineError::Other(format!("registration report: {e}")))?;
        writeln!(file, "{line}")
            .map_err(|e| PipelineError::Core(ciresdiff_core::CoreError::io(&report_path, e)))?;
    }
    Ok(records)
}

/// One aligned pair ready for training or evaluation.
pub struct RegisteredPair {
    pub entry: ManifestEntry,
    pub initial: Volume,
    pub follow_up: Volume,
    pub mask: Mask,
}

pub fn load_registered(cfg: &RunConfig, ids: &[usize]) -> Result<Vec<RegisteredPair>> {
    let entries = read_dataset(cfg)?;
    let dir = cfg.registered_dir();
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let entry = entries
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| PipelineError::Other(format!("sample id {id} not in manifest")))?
            .clone();
        let (pi, pf, pm) = reg_paths(&dir, id);
        for p in [&pi, &pf, &pm] {
            if !p.exists() {
                return Err(PipelineError::MissingArtifact {
                    stage: "register".into(),
                    path: p.clone(),
                });
            }
        }
        let initial = rvol::load_volume(&pi)?;
        let follow_up = rvol::load_volume(&pf)?;
        let mask_vol = rvol::load_volume(&pm)?;
        let mask = Mask::from_volume_threshold(&mask_vol, 0.5);
        out.push(RegisteredPair {
            entry,
            initial,
            follow_up,
            mask,
        });
    }
    Ok(out)
}
