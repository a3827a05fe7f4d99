//! On-disk datasets: RVOL volume pairs plus a JSON-lines manifest.

use crate::error::{CoreError, Result};
use crate::phantom::{
    generate_pair, FunctionRecord, PairedSample, PhantomParams, ProgressionLabel,
};
use crate::rvol;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub seed: u64,
    pub initial: String,
    pub follow_up: String,
    pub label: ProgressionLabel,
    pub record_text: String,
    pub record: FunctionRecord,
    pub misalignment: [f64; 12],
}

impl ManifestEntry {
    pub fn initial_path(&self, dir: &Path) -> PathBuf {
        dir.join(&self.initial)
    }

    pub fn follow_up_path(&self, dir: &Path) -> PathBuf {
        dir.join(&self.follow_up)
    }
}

/// Per-sample seed via a splittable counter from the master seed
/// (splitmix64 finalizer), so samples are independent of generation order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Generate `n` samples under `out_dir` and write one manifest line each.
pub fn write_dataset(
    n: usize,
    params: &PhantomParams,
    out_dir: impl AsRef<Path>,
    master_seed: u64,
) -> Result<Vec<ManifestEntry>> {
    if n < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "dataset needs at least 2 samples, got {n}"
        )));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let seed = derive_seed(master_seed, i as u64);
        let sample = generate_pair(params, seed)?;
        let initial_name = format!("sample_{i:04}_initial.rvol");
        let follow_name = format!("sample_{i:04}_followup.rvol");
        rvol::save_volume(out_dir.join(&initial_name), &sample.initial)?;
        rvol::save_volume(out_dir.join(&follow_name), &sample.follow_up)?;
        entries.push(manifest_entry(i, seed, initial_name, follow_name, &sample));
    }

    let manifest_path = out_dir.join(MANIFEST_NAME);
    let mut file = std::fs::File::create(&manifest_path)
        .map_err(|e| CoreError::io(&manifest_path, e))?;
    for entry in &entries {
        let line = serde_json::to_string(entry)
            .map_err(|e| CoreError::InvalidArgument(format!("manifest serialization: {e}")))?;
        writeln!(file, "{line}").map_err(|e| CoreError::io(&manifest_path, e))?;
    }
    Ok(entries)
}

fn manifest_entry(
    id: usize,
    seed: u64,
    initial: String,
    follow_up: String,
    sample: &PairedSample,
) -> ManifestEntry {
    ManifestEntry {
        id,
        seed,
        initial,
        follow_up,
        label: sample.label,
        record_text: crate::phantom::serialize_record(&sample.record),
        record: sample.record.clone(),
        misalignment: sample.misalignment.to_vec12(),
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = dir.as_ref().join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
            CoreError::InvalidArgument(format!(
                "manifest {} line {}: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(CoreError::InvalidArgument(format!(
            "manifest {} has no entries",
            path.display()
        )));
    }
    Ok(entries)
}
