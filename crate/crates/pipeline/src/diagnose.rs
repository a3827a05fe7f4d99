//! Diagnostic evaluation: a progression classifier is trained on real
//! aligned pairs from the training split, then scored on real test pairs
//! (ceiling), noise follow-ups (control), and generated follow-ups.

use crate::config::{RunConfig, Variant};
use crate::error::{PipelineError, Result};
use crate::evaluate::sample_volume;
use crate::stages::RegisteredPair;
use ciresdiff_core::dataset::derive_seed;
use ciresdiff_core::diffusion::DenoisePredictor;
use ciresdiff_core::phantom::ProgressionLabel;
use ciresdiff_core::volume::Volume;
use ciresdiff_nn::classifier::{ClassifierConfig, PairClassifier};
use ciresdiff_nn::params::Adam;
use ciresdiff_nn::Graph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisScores {
    pub accuracy: f64,
    pub auc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub variant: String,
    pub classifier_train_n: usize,
    pub ceiling: DiagnosisScores,
    pub control: DiagnosisScores,
    pub generated: DiagnosisScores,
}

pub fn train_classifier(
    cfg: &RunConfig,
    pairs: &[RegisteredPair],
    seed: u64,
) -> Result<PairClassifier> {
    let labels: Vec<f64> = pairs
        .iter()
        .map(|p| match p.entry.label {
            ProgressionLabel::Progressed => 1.0,
            ProgressionLabel::Stable => 0.0,
        })
        .collect();
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(PipelineError::Other(
            "degenerate single-class split for classifier training".into(),
        ));
    }
    let mut model = PairClassifier::new(ClassifierConfig {
        seed: derive_seed(seed, 0xC1),
        ..ClassifierConfig::default()
    });
    let mut adam = Adam::new(cfg.classifier_learning_rate, model.params.param_count());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.classifier_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1 + epoch as u64));
        order.shuffle(&mut rng);
        for &i in &order {
            let input = PairClassifier::pair_tensor(&pairs[i].initial, &pairs[i].follow_up)?;
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let x = g.input(input);
            let logit = model.forward(&mut g, &bound, x);
            let loss = g.bce_with_logit(logit, labels[i]);
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(PipelineError::Numeric {
                    context: format!("classifier epoch {epoch}"),
                    detail: format!("loss {value}"),
                });
            }
            let grads = g.backward(loss);
            let grad = model.params.flat_grad(&bound, &grads);
            let mut flat = model.params.flat();
            adam.step(&mut flat, &grad);
            model.params.set_flat(&flat);
        }
    }
    Ok(model)
}

/// Accuracy (threshold 0.5, ties predicted stable) and rank AUC.
pub fn score_pairs(
    classifier: &PairClassifier,
    pairs: &[(&Volume, &Volume, ProgressionLabel)],
) -> Result<DiagnosisScores> {
    let mut correct = 0usize;
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(pairs.len());
    for (initial, follow, label) in pairs {
        let p = classifier.classify_pair(initial, follow)?;
        let progressed = *label == ProgressionLabel::Progressed;
        if (p > 0.5) == progressed {
            correct += 1;
        }
        scored.push((p, progressed));
    }
    Ok(DiagnosisScores {
        accuracy: correct as f64 / pairs.len().max(1) as f64,
        auc: rank_auc(&scored),
        n: pairs.len(),
    })
}

/// Mann-Whitney AUC with midrank tie handling.
fn rank_auc(scored: &[(f64, bool)]) -> f64 {
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let n_pos = sorted.iter().filter(|(_, y)| *y).count();
    let n_neg = sorted.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return f64::NAN;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &sorted[i..j] {
            if item.1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    (rank_sum - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64)
}

/// Uniform noise inside the lung mask; the out-of-distribution control.
fn noise_follow_up(pair: &RegisteredPair, rng: &mut ChaCha8Rng) -> Volume {
    let mut v = Volume::zeros(pair.follow_up.dims(), pair.follow_up.spacing());
    for (x, &m) in v.voxels_mut().iter_mut().zip(pair.mask.data()) {
        if m {
            *x = rng.gen::<f64>();
        }
    }
    v
}

pub fn diagnostic_eval(
    cfg: &RunConfig,
    variant: Variant,
    generator: &dyn DenoisePredictor,
    train_pairs: &[RegisteredPair],
    test_pairs: &[(RegisteredPair, Option<Vec<f64>>)],
    seed: u64,
) -> Result<DiagnosisReport> {
    let classifier = train_classifier(cfg, train_pairs, derive_seed(seed, 0xAA))?;
    diagnostic_eval_with_classifier(cfg, variant, generator, &classifier, train_pairs.len(), test_pairs, seed)
}

pub fn diagnostic_eval_with_classifier(
    cfg: &RunConfig,
    variant: Variant,
    generator: &dyn DenoisePredictor,
    classifier: &PairClassifier,
    classifier_train_n: usize,
    test_pairs: &[(RegisteredPair, Option<Vec<f64>>)],
    seed: u64,
) -> Result<DiagnosisReport> {
    // Ceiling: real pairs.
    let real: Vec<(&Volume, &Volume, ProgressionLabel)> = test_pairs
        .iter()
        .map(|(p, _)| (&p.initial, &p.follow_up, p.entry.label))
        .collect();
    let ceiling = score_pairs(classifier, &real)?;

    // Control: noise follow-ups carry no progression signal.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xBB));
    let noise_vols: Vec<Volume> = test_pairs
        .iter()
        .map(|(p, _)| noise_follow_up(p, &mut rng))
        .collect();
    let control_pairs: Vec<(&Volume, &Volume, ProgressionLabel)> = test_pairs
        .iter()
        .zip(&noise_vols)
        .map(|((p, _), nv)| (&p.initial, nv, p.entry.label))
        .collect();
    let control = score_pairs(classifier, &control_pairs)?;

    // Generated follow-ups, several sampler draws per pair.
    let mut generated_vols = Vec::new();
    for (p, conditioning) in test_pairs {
        for draw in 0..cfg.sampler_seeds {
            let pred = sample_volume(
                generator,
                variant,
                cfg,
                &p.initial,
                conditioning.as_deref(),
                derive_seed(seed, (p.entry.id as u64) << 8 | draw as u64),
            )?;
            generated_vols.push((pred, p.entry.id));
        }
    }
    let generated_pairs: Vec<(&Volume, &Volume, ProgressionLabel)> = generated_vols
        .iter()
        .map(|(pred, id)| {
            let (p, _) = test_pairs
                .iter()
                .find(|(p, _)| p.entry.id == *id)
                .expect("generated volume belongs to a test pair");
            (&p.initial, pred, p.entry.label)
        })
        .collect();
    let generated = score_pairs(classifier, &generated_pairs)?;

    Ok(DiagnosisReport {
        variant: variant.tag().to_string(),
        classifier_train_n,
        ceiling,
        control,
        generated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_handles_perfect_and_random_rankings() {
        let perfect = vec![(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        assert!((rank_auc(&perfect) - 1.0).abs() < 1e-12);
        let inverted = vec![(0.9, false), (0.8, false), (0.2, true), (0.1, true)];
        assert!(rank_auc(&inverted).abs() < 1e-12);
        let tied = vec![(0.5, false), (0.5, true)];
        assert!((rank_auc(&tied) - 0.5).abs() < 1e-12);
    }
}
