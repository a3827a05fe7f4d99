//! Text-queried cross-attention over image token rows.
//!
//! The pooled text vector is tiled across the M spatial token positions;
//! queries and keys project the tiled text field, values project the image
//! tokens, and the attended values are added residually:
//!
//!   out = z_ct + softmax((Q K^T) / sqrt(d) + B) . V
//!
//! Because every Q row and K row comes from the same pooled vector, the
//! logit contribution of the text is constant across positions and the
//! attention pattern is governed by the learned bias B; the text still
//! flows through the projections' gradients and the surrounding network.

use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

pub struct CrossAttentionWeights {
    /// Query projection [d, d_text] with bias [d].
    pub wq: Var,
    pub bq: Var,
    /// Key projection [d, d_text] with bias [d].
    pub wk: Var,
    pub bk: Var,
    /// Value projection [d, d] with bias [d].
    pub wv: Var,
    pub bv: Var,
    /// Position bias [M, M].
    pub bias: Var,
}

impl Graph {
    /// `z_text` is the pooled text vector [d_text]; `z_ct` the image token
    /// rows [M, d]. Returns [M, d].
    pub fn cross_attention_tokens(
        &mut self,
        z_text: Var,
        z_ct: Var,
        w: &CrossAttentionWeights,
    ) -> Var {
        let d = self.value(w.wq).shape[0];
        let m = self.value(z_ct).shape[0];
        assert_eq!(self.value(z_ct).shape[1], d, "token channel mismatch");
        assert_eq!(self.value(w.bias).shape, vec![m, m], "bias shape mismatch");

        let q = self.linear(z_text, w.wq, Some(w.bq));
        let k = self.linear(z_text, w.wk, Some(w.bk));
        let qk = self.dot(q, k);
        let scaled = self.scale(qk, 1.0 / (d as f64).sqrt());
        let logits = self.add_scalar_var(w.bias, scaled);
        let attn = self.softmax_rows(logits);

        let wv_t = self.transpose2d(w.wv);
        let v_proj = self.matmul(z_ct, wv_t);
        let bv_rows = self.broadcast_row(w.bv, m);
        let v = self.add(v_proj, bv_rows);

        let attended = self.matmul(attn, v);
        self.add(z_ct, attended)
    }
}

/// Standalone tensor-level form of the op; runs the same graph code.
#[allow(clippy::too_many_arguments)]
pub fn cross_attention(
    z_text: &Tensor,
    z_ct: &Tensor,
    wq: &Tensor,
    bq: &Tensor,
    wk: &Tensor,
    bk: &Tensor,
    wv: &Tensor,
    bv: &Tensor,
    bias: &Tensor,
) -> Tensor {
    let mut g = Graph::new();
    let z_text = g.input(z_text.clone());
    let z_ct_v = g.input(z_ct.clone());
    let weights = CrossAttentionWeights {
        wq: g.input(wq.clone()),
        bq: g.input(bq.clone()),
        wk: g.input(wk.clone()),
        bk: g.input(bk.clone()),
        wv: g.input(wv.clone()),
        bv: g.input(bv.clone()),
        bias: g.input(bias.clone()),
    };
    let out = g.cross_attention_tokens(z_text, z_ct_v, &weights);
    g.value(out).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Brute-force triple-loop oracle for the same formula.
    #[allow(clippy::too_many_arguments)]
    pub fn oracle(
        z_text: &[f64],
        z_ct: &Tensor,
        wq: &Tensor,
        bq: &[f64],
        wk: &Tensor,
        bk: &[f64],
        wv: &Tensor,
        bv: &[f64],
        bias: &Tensor,
    ) -> Tensor {
        let m = z_ct.shape[0];
        let d = z_ct.shape[1];
        let dt = z_text.len();
        let proj = |w: &Tensor, b: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; d];
            for o in 0..d {
                let mut acc = b[o];
                for i in 0..dt {
                    acc += w.data[o * dt + i] * z_text[i];
                }
                out[o] = acc;
            }
            out
        };
        let q = proj(wq, bq);
        let k = proj(wk, bk);
        let qdotk: f64 = q.iter().zip(&k).map(|(a, b)| a * b).sum();
        let scale = qdotk / (d as f64).sqrt();

        // V rows.
        let mut v = vec![0.0; m * d];
        for r in 0..m {
            for o in 0..d {
                let mut acc = bv[o];
                for i in 0..d {
                    acc += wv.data[o * d + i] * z_ct.data[r * d + i];
                }
                v[r * d + o] = acc;
            }
        }

        let mut out = z_ct.clone();
        for i in 0..m {
            // softmax over the key axis
            let mut logits = vec![0.0; m];
            for j in 0..m {
                logits[j] = scale + bias.data[i * m + j];
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut weights = vec![0.0; m];
            let mut denom = 0.0;
            for j in 0..m {
                weights[j] = (logits[j] - mx).exp();
                denom += weights[j];
            }
            for j in 0..m {
                weights[j] /= denom;
            }
            for o in 0..d {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += weights[j] * v[j * d + o];
                }
                out.data[i * d + o] += acc;
            }
        }
        out
    }

    #[test]
    fn single_position_softmax_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 4;
        let dt = 5;
        let z_text = rand_tensor(vec![dt], &mut rng);
        let z_ct = rand_tensor(vec![1, d], &mut rng);
        let wq = rand_tensor(vec![d, dt], &mut rng);
        let bq = rand_tensor(vec![d], &mut rng);
        let wk = rand_tensor(vec![d, dt], &mut rng);
        let bk = rand_tensor(vec![d], &mut rng);
        let wv = rand_tensor(vec![d, d], &mut rng);
        let bv = rand_tensor(vec![d], &mut rng);
        let bias = rand_tensor(vec![1, 1], &mut rng);
        let out = cross_attention(&z_text, &z_ct, &wq, &bq, &wk, &bk, &wv, &bv, &bias);
        // With M = 1 the attention weight is exactly 1, so the output is
        // z_ct + Conv_V(z_ct).
        for o in 0..d {
            let mut expect = bv.data[o] + z_ct.data[o];
            for i in 0..d {
                expect += wv.data[o * d + i] * z_ct.data[i];
            }
            assert!((out.data[o] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(m, d, dt) in &[(2usize, 2usize, 3usize), (5, 4, 6), (9, 8, 4), (27, 8, 8)] {
            let z_text = rand_tensor(vec![dt], &mut rng);
            let z_ct = rand_tensor(vec![m, d], &mut rng);
            let wq = rand_tensor(vec![d, dt], &mut rng);
            let bq = rand_tensor(vec![d], &mut rng);
            let wk = rand_tensor(vec![d, dt], &mut rng);
            let bk = rand_tensor(vec![d], &mut rng);
            let wv = rand_tensor(vec![d, d], &mut rng);
            let bv = rand_tensor(vec![d], &mut rng);
            let bias = rand_tensor(vec![m, m], &mut rng);
            let out = cross_attention(&z_text, &z_ct, &wq, &bq, &wk, &bk, &wv, &bv, &bias);
            let expect = oracle(
                &z_text.data,
                &z_ct,
                &wq,
                &bq.data,
                &wk,
                &bk.data,
                &wv,
                &bv.data,
                &bias,
            );
            for (a, b) in out.data.iter().zip(&expect.data) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b} at (m={m}, d={d})");
            }
        }
    }

    #[test]
    fn saturated_diagonal_bias_recovers_value_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, d, dt) = (4usize, 3usize, 3usize);
        let z_text = rand_tensor(vec![dt], &mut rng);
        let z_ct = rand_tensor(vec![m, d], &mut rng);
        let wq = rand_tensor(vec![d, dt], &mut rng);
        let bq = rand_tensor(vec![d], &mut rng);
        let wk = rand_tensor(vec![d, dt], &mut rng);
        let bk = rand_tensor(vec![d], &mut rng);
        let wv = rand_tensor(vec![d, d], &mut rng);
        let bv = rand_tensor(vec![d], &mut rng);
        // Zero diagonal, strongly negative off-diagonal: A -> identity.
        let mut bias = Tensor::new(vec![m, m], vec![-1e6; m * m]);
        for i in 0..m {
            bias.data[i * m + i] = 0.0;
        }
        let out = cross_attention(&z_text, &z_ct, &wq, &bq, &wk, &bk, &wv, &bv, &bias);
        for r in 0..m {
            for o in 0..d {
                let mut expect = bv.data[o] + z_ct.data[r * d + o];
                for i in 0..d {
                    expect += wv.data[o * d + i] * z_ct.data[r * d + i];
                }
                assert!((out.data[r * d + o] - expect).abs() < 1e-9);
            }
        }
    }
}
