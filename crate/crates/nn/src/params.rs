//! Named parameter sets with a flat-vector view, per-layer seeded
//! initialization, and the Adam update rule.

use crate::tape::{Graph, GradStore, Var};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in &self.tensors {
            out.extend_from_slice(&t.data);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut off = 0;
        for t in &mut self.tensors {
            let len = t.data.len();
            t.data.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }

    /// Bind every parameter as a graph input, in registration order.
    pub fn bind(&self, graph: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| graph.input(t.clone())).collect()
    }

    /// Collect the flat gradient for bound params (zero where untouched).
    pub fn flat_grad(&self, bound: &[Var], grads: &GradStore) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (t, &v) in self.tensors.iter().zip(bound) {
            match grads.get(v) {
                Some(g) => out.extend_from_slice(&g.data),
                None => out.extend(std::iter::repeat(0.0).take(t.len())),
            }
        }
        out
    }
}

/// Per-layer rng so adding layers never perturbs the initialization of
/// existing ones.
pub fn layer_rng(model_seed: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325 ^ model_seed;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// He-style normal init with std sqrt(2 / fan_in).
pub fn he_init(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| std * normal(rng)).collect();
    Tensor::new(shape, data)
}

pub fn uniform_init(shape: Vec<usize>, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
    Tensor::new(shape, data)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, dim: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

/// Sinusoidal timestep embedding of even dimension.
pub fn timestep_embedding(t: usize, dim: usize) -> Tensor {
    assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let mut data = vec![0.0; dim];
    for i in 0..half {
        let freq = (10000.0f64).powf(-(i as f64) / half as f64);
        let arg = t as f64 * freq;
        data[i] = arg.sin();
        data[half + i] = arg.cos();
    }
    Tensor::new(vec![dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let mut p = ParamSet::new();
        let mut rng = layer_rng(1, "a");
        p.register("a", he_init(vec![2, 3], 3, &mut rng));
        p.register("b", Tensor::zeros(vec![4]));
        let flat = p.flat();
        assert_eq!(flat.len(), 10);
        let mut q = p.clone();
        let doubled: Vec<f64> = flat.iter().map(|x| x * 2.0).collect();
        q.set_flat(&doubled);
        assert_eq!(q.flat(), doubled);
    }

    #[test]
    fn layer_rng_is_name_stable() {
        let a1: Vec<f64> = (0..4).map(|_| layer_rng(7, "w1").gen::<f64>()).collect();
        let a2: Vec<f64> = (0..4).map(|_| layer_rng(7, "w1").gen::<f64>()).collect();
        assert_eq!(a1, a2);
        let b: f64 = layer_rng(7, "w2").gen();
        assert_ne!(a1[0], b);
    }

    #[test]
    fn adam_reduces_quadratic() {
        let mut params = vec![5.0, -3.0];
        let mut opt = Adam::new(0.1, 2);
        for _ in 0..500 {
            let grads: Vec<f64> = params.iter().map(|&x| 2.0 * x).collect();
            opt.step(&mut params, &grads);
        }
        assert!(params.iter().all(|&x| x.abs() < 1e-2), "{params:?}");
    }

    #[test]
    fn timestep_embedding_distinct_and_bounded() {
        let a = timestep_embedding(1, 16);
        let b = timestep_embedding(2, 16);
        assert_ne!(a.data, b.data);
        assert!(a.data.iter().all(|&v| v.abs() <= 1.0));
    }
}
