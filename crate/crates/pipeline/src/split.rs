//! Deterministic label-stratified splits: fixed train/test counts or
//! k-fold assignments.

use crate::error::{PipelineError, Result};
use ciresdiff_core::dataset::ManifestEntry;
use ciresdiff_core::phantom::ProgressionLabel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn assert_disjoint(&self) -> Result<()> {
        for id in &self.train {
            if self.test.contains(id) {
                return Err(PipelineError::SplitLeakage(*id));
            }
        }
        Ok(())
    }

    /// Reject any requested id that belongs to the test split.
    pub fn assert_train_only(&self, requested: &[usize]) -> Result<()> {
        for id in requested {
            if self.test.contains(id) {
                return Err(PipelineError::SplitLeakage(*id));
            }
        }
        Ok(())
    }
}

/// Stratified shuffle of ids by label; round-robin assignment keeps label
/// proportions near-equal in every part.
fn stratified_order(entries: &[ManifestEntry], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut progressed: Vec<usize> = entries
        .iter()
        .filter(|e| e.label == ProgressionLabel::Progressed)
        .map(|e| e.id)
        .collect();
    let mut stable: Vec<usize> = entries
        .iter()
        .filter(|e| e.label == ProgressionLabel::Stable)
        .map(|e| e.id)
        .collect();
    progressed.shuffle(&mut rng);
    stable.shuffle(&mut rng);
    // Interleave the two classes so any prefix is near-balanced.
    let mut order = Vec::with_capacity(entries.len());
    let (mut i, mut j) = (0, 0);
    while i < progressed.len() || j < stable.len() {
        if i < progressed.len() {
            order.push(progressed[i]);
            i += 1;
        }
        if j < stable.len() {
            order.push(stable[j]);
            j += 1;
        }
    }
    order
}

/// Deterministic shuffled partition into k near-equal label-stratified folds.
pub fn kfold_split(entries: &[ManifestEntry], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(PipelineError::Config(format!(
            "kfold: need at least 2 folds, got {k}"
        )));
    }
    if entries.len() < k {
        return Err(PipelineError::Config(format!(
            "kfold: need at least {k} samples, got {}",
            entries.len()
        )));
    }
    let order = stratified_order(entries, seed);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in order.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Fixed-count stratified split (the default protocol).
pub fn fixed_split(
    entries: &[ManifestEntry],
    train_count: usize,
    test_count: usize,
    seed: u64,
) -> Result<Split> {
    if train_count + test_count > entries.len() {
        return Err(PipelineError::Config(format!(
            "split: train {train_count} + test {test_count} exceeds {} samples",
            entries.len()
        )));
    }
    let order = stratified_order(entries, seed);
    let mut train: Vec<usize> = order[..train_count].to_vec();
    let mut test: Vec<usize> = order[train_count..train_count + test_count].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let split = Split { train, test };
    split.assert_disjoint()?;
    Ok(split)
}

/// Split used for one k-fold round: the chosen fold is the test set.
pub fn kfold_round(entries: &[ManifestEntry], k: usize, fold: usize, seed: u64) -> Result<Split> {
    let folds = kfold_split(entries, k, seed)?;
    if fold >= k {
        return Err(PipelineError::Config(format!(
            "fold_index {fold} out of range for {k} folds"
        )));
    }
    let test = folds[fold].clone();
    let mut train = Vec::new();
    for (i, f) in folds.iter().enumerate() {
        if i != fold {
            train.extend_from_slice(f);
        }
    }
    train.sort_unstable();
    let split = Split { train, test };
    split.assert_disjoint()?;
    Ok(split)
}
