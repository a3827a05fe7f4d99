//! Progression classifier over concatenated (initial, follow-up) pairs:
//! strided convolutions with one residual block, global pooling, and a
//! single logit.

use crate::params::{he_init, layer_rng, ParamId, ParamSet};
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;
use ciresdiff_core::error::{CoreError, Result};
use ciresdiff_core::volume::Volume;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub channels: [usize; 3],
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16, 32],
            seed: 0,
        }
    }
}

pub struct PairClassifier {
    pub config: ClassifierConfig,
    pub params: ParamSet,
    ids: Vec<ParamId>,
}

impl PairClassifier {
    pub fn new(config: ClassifierConfig) -> Self {
        let mut params = ParamSet::new();
        let mut ids = Vec::new();
        let [c1, c2, c3] = config.channels;
        let conv = |params: &mut ParamSet,
                        ids: &mut Vec<ParamId>,
                        name: &str,
                        cin: usize,
                        cout: usize,
                        zero: bool| {
            let w = if zero {
                Tensor::zeros(vec![cout, cin, 3, 3, 3])
            } else {
                he_init(
                    vec![cout, cin, 3, 3, 3],
                    cin * 27,
                    &mut layer_rng(config.seed, name),
                )
            };
            ids.push(params.register(format!("{name}.w"), w));
            ids.push(params.register(format!("{name}.b"), Tensor::zeros(vec![cout])));
        };
        conv(&mut params, &mut ids, "cls.conv1", 2, c1, false);
        conv(&mut params, &mut ids, "cls.conv2", c1, c2, false);
        // Residual refinement at the middle resolution.
        conv(&mut params, &mut ids, "cls.res1", c2, c2, false);
        conv(&mut params, &mut ids, "cls.res2", c2, c2, true);
        conv(&mut params, &mut ids, "cls.conv3", c2, c3, false);
        ids.push(params.register(
            "cls.head.w",
            Tensor::zeros(vec![1, c3]),
        ));
        ids.push(params.register("cls.head.b", Tensor::zeros(vec![1])));
        Self {
            config,
            params,
            ids,
        }
    }

    /// Logit var for a [2, S, S, S] input inside a graph.
    pub fn forward(&self, g: &mut Graph, bound: &[Var], pair: Var) -> Var {
        let p = |i: usize| bound[self.ids[i].0];
        let mut h = g.conv3d(pair, p(0), p(1), 2, 1);
        h = g.silu(h);
        h = g.conv3d(h, p(2), p(3), 2, 1);
        h = g.silu(h);
        let r = g.silu(h);
        let r = g.conv3d(r, p(4), p(5), 1, 1);
        let r = g.silu(r);
        let r = g.conv3d(r, p(6), p(7), 1, 1);
        h = g.add(h, r);
        h = g.conv3d(h, p(8), p(9), 2, 1);
        h = g.silu(h);
        let pooled = g.global_avg_pool(h);
        let logit = g.linear(pooled, p(10), Some(p(11)));
        logit
    }

    pub fn pair_tensor(initial: &Volume, follow_up: &Volume) -> Result<Tensor> {
        initial.check_same_dims(follow_up, "classifier pair")?;
        let d = initial.dims();
        let mut data = Vec::with_capacity(2 * initial.len());
        data.extend_from_slice(initial.voxels());
        data.extend_from_slice(follow_up.voxels());
        Ok(Tensor::new(vec![2, d[2], d[1], d[0]], data))
    }

    /// Probability of progression for a volume pair.
    pub fn classify_pair(&self, initial: &Volume, follow_up: &Volume) -> Result<f64> {
        let dims = initial.dims();
        if dims.iter().any(|&d| d % 8 != 0) {
            return Err(CoreError::DimMismatch(format!(
                "classifier needs dims divisible by 8, got {dims:?}"
            )));
        }
        let t = Self::pair_tensor(initial, follow_up)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let input = g.input(t);
        let logit = self.forward(&mut g, &bound, input);
        let value = g.value(logit).item();
        Ok(1.0 / (1.0 + (-value).exp()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_in_unit_interval() {
        let cls = PairClassifier::new(ClassifierConfig::default());
        let a = Volume::filled([8, 8, 8], [1.0; 3], 0.4);
        let b = Volume::filled([8, 8, 8], [1.0; 3], 0.6);
        let p = cls.classify_pair(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&p));
        // Zero-initialized head gives exactly 0.5.
        assert_eq!(p, 0.5);
    }

    #[test]
    fn dim_mismatch_rejected() {
        let cls = PairClassifier::new(ClassifierConfig::default());
        let a = Volume::filled([8, 8, 8], [1.0; 3], 0.4);
        let b = Volume::filled([8, 8, 16], [1.0; 3], 0.6);
        assert!(cls.classify_pair(&a, &b).is_err());
    }
}
