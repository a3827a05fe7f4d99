//! Text and image encoders for contrastive pretraining.
//!
//! The text side tokenizes the canonical function-record line by whitespace
//! and key=value splitting, bins numeric values into 10 uniform bins per
//! field over the generator's ranges, embeds tokens, and mean-pools to an
//! L2-normalized vector. The image side is a small strided convolutional
//! encoder to the same dimension.

use crate::params::{he_init, layer_rng, ParamId, ParamSet};
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const OOV_TOKEN: usize = 0;
pub const BINS_PER_FIELD: usize = 10;

const NUMERIC_FIELDS: [(&str, f64, f64); 4] = [
    ("VC", 1.0, 7.0),
    ("PEF", 250.0, 650.0),
    ("AGE", 40.0, 80.0),
    ("FIB", 0.0, 50.0),
];

/// OOV + four binned numeric fields + two sex tokens.
pub const VOCAB_SIZE: usize = 1 + 4 * BINS_PER_FIELD + 2;

/// Tokenize a serialized function record. Unknown keys or unparseable
/// values map to the reserved OOV token rather than failing.
pub fn tokenize(text: &str) -> Vec<usize> {
    let mut ids = Vec::new();
    for word in text.split_whitespace() {
        ids.push(token_id(word));
    }
    if ids.is_empty() {
        ids.push(OOV_TOKEN);
    }
    ids
}

fn token_id(word: &str) -> usize {
    let Some((key, raw)) = word.split_once('=') else {
        return OOV_TOKEN;
    };
    if key == "SEX" {
        return match raw {
            "M" => 1 + 4 * BINS_PER_FIELD,
            "F" => 2 + 4 * BINS_PER_FIELD,
            _ => OOV_TOKEN,
        };
    }
    for (fi, (name, lo, hi)) in NUMERIC_FIELDS.iter().enumerate() {
        if key == *name {
            let Some(value) = parse_leading_number(raw) else {
                return OOV_TOKEN;
            };
            let frac = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
            let bin = ((frac * BINS_PER_FIELD as f64) as usize).min(BINS_PER_FIELD - 1);
            return 1 + fi * BINS_PER_FIELD + bin;
        }
    }
    OOV_TOKEN
}

fn parse_leading_number(raw: &str) -> Option<f64> {
    let end = raw
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '-' || *c == '+'))
        .map(|(i, _)| i)
        .unwrap_or(raw.len());
    raw[..end].parse().ok()
}

/// Token features plus an L2-normalized pooled summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub token_features: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            seed: 0,
        }
    }
}

pub struct TextEncoder {
    pub config: TextEncoderConfig,
    pub params: ParamSet,
    table: ParamId,
}

impl TextEncoder {
    pub fn new(config: TextEncoderConfig) -> Self {
        let mut params = ParamSet::new();
        let table = params.register(
            "table",
            he_init(
                vec![VOCAB_SIZE, config.embed_dim],
                config.embed_dim,
                &mut layer_rng(config.seed, "text.table"),
            ),
        );
        Self {
            config,
            params,
            table,
        }
    }

    /// Pooled embedding var inside a graph (training path).
    pub fn forward(&self, g: &mut Graph, bound: &[Var], token_ids: Vec<usize>) -> Var {
        let table = bound[self.table.0];
        let mean = g.gather_rows_mean(table, token_ids);
        g.l2_normalize(mean)
    }

    /// Full embedding on plain data (inference path).
    pub fn encode(&self, text: &str) -> TextEmbedding {
        let ids = tokenize(text);
        let table = self.params.tensor(self.table);
        let d = self.config.embed_dim;
        let token_features: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| table.data[id * d..(id + 1) * d].to_vec())
            .collect();
        let mut pooled = vec![0.0; d];
        for f in &token_features {
            for (p, v) in pooled.iter_mut().zip(f) {
                *p += v;
            }
        }
        let n = token_features.len() as f64;
        for p in pooled.iter_mut() {
            *p /= n;
        }
        let norm = pooled.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for p in pooled.iter_mut() {
                *p /= norm;
            }
        }
        TextEmbedding {
            token_features,
            pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEncoderConfig {
    pub channels: [usize; 3],
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16, 32],
            embed_dim: 32,
            seed: 0,
        }
    }
}

pub struct ImageEncoder {
    pub config: ImageEncoderConfig,
    pub params: ParamSet,
    ids: Vec<ParamId>,
}

impl ImageEncoder {
    pub fn new(config: ImageEncoderConfig) -> Self {
        let mut params = ParamSet::new();
        let mut ids = Vec::new();
        let chans = [1, config.channels[0], config.channels[1], config.channels[2]];
        for l in 0..3 {
            let name = format!("img.conv{l}");
            ids.push(params.register(
                format!("{name}.w"),
                he_init(
                    vec![chans[l + 1], chans[l], 3, 3, 3],
                    chans[l] * 27,
                    &mut layer_rng(config.seed, &name),
                ),
            ));
            ids.push(params.register(format!("{name}.b"), Tensor::zeros(vec![chans[l + 1]])));
        }
        ids.push(params.register(
            "img.proj.w",
            he_init(
                vec![config.embed_dim, config.channels[2]],
                config.channels[2],
                &mut layer_rng(config.seed, "img.proj"),
            ),
        ));
        ids.push(params.register("img.proj.b", Tensor::zeros(vec![config.embed_dim])));
        Self {
            config,
            params,
            ids,
        }
    }

    pub fn forward(&self, g: &mut Graph, bound: &[Var], volume: Var) -> Var {
        let mut h = volume;
        for l in 0..3 {
            let w = bound[self.ids[2 * l].0];
            let b = bound[self.ids[2 * l + 1].0];
            h = g.conv3d(h, w, b, 2, 1);
            h = g.silu(h);
        }
        let pooled = g.global_avg_pool(h);
        let w = bound[self.ids[6].0];
        let b = bound[self.ids[7].0];
        let proj = g.linear(pooled, w, Some(b));
        g.l2_normalize(proj)
    }

    /// Embedding on plain tensors (inference path).
    pub fn encode(&self, volume: &Tensor) -> Vec<f64> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let v = g.input(volume.clone());
        let out = self.forward(&mut g, &bound, v);
        g.value(out).data.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_parses_the_canonical_template() {
        let ids = tokenize("VC=3.20L PEF=400L/min AGE=60 SEX=M FIB=12.5%");
        assert_eq!(ids.len(), 5);
        assert!(ids.iter().all(|&id| id != OOV_TOKEN && id < VOCAB_SIZE));
    }

    #[test]
    fn unknown_tokens_map_to_oov() {
        assert_eq!(tokenize("WHAT=9"), vec![OOV_TOKEN]);
        assert_eq!(tokenize("garbage"), vec![OOV_TOKEN]);
        assert_eq!(tokenize("SEX=X"), vec![OOV_TOKEN]);
    }

    #[test]
    fn bins_separate_distant_values() {
        let a = token_id("VC=2.00L");
        let b = token_id("VC=6.00L");
        assert_ne!(a, b);
        // Same bin for nearby values.
        assert_eq!(token_id("VC=2.00L"), token_id("VC=2.05L"));
    }

    #[test]
    fn identical_texts_embed_identically() {
        let enc = TextEncoder::new(TextEncoderConfig::default());
        let a = enc.encode("VC=3.20L PEF=400L/min AGE=60 SEX=M FIB=12.5%");
        let b = enc.encode("VC=3.20L PEF=400L/min AGE=60 SEX=M FIB=12.5%");
        assert_eq!(a, b);
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let enc = TextEncoder::new(TextEncoderConfig::default());
        let e = enc.encode("VC=3.20L PEF=400L/min AGE=60 SEX=F FIB=2.5%");
        let norm: f64 = e.pooled.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);

        let img = ImageEncoder::new(ImageEncoderConfig::default());
        let v = Tensor::new(vec![1, 8, 8, 8], (0..512).map(|i| (i % 9) as f64 * 0.1).collect());
        let emb = img.encode(&v);
        let norm: f64 = emb.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
}
