//! The x0-predicting denoiser: a two-level encoder-decoder over 3D patches
//! with attention-gated skip connections, sinusoidal timestep conditioning
//! at every resolution, and optional text cross-attention blocks at each
//! decoder level.
//!
//! The final convolution is zero-initialized so an untrained model predicts
//! the zero volume, and the cross-attention output projections are
//! zero-initialized so the conditioned and unconditioned architectures
//! agree exactly at initialization.

use crate::attention::CrossAttentionWeights;
use crate::params::{he_init, layer_rng, timestep_embedding, ParamId, ParamSet};
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;
use ciresdiff_core::diffusion::DenoisePredictor;
use ciresdiff_core::error::{CoreError, Result};
use ciresdiff_core::volume::Volume;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub base_channels: usize,
    pub time_dim: usize,
    pub text_dim: usize,
    pub cross_attention: bool,
    pub token_grid: usize,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            base_channels: 8,
            time_dim: 16,
            text_dim: 32,
            cross_attention: false,
            token_grid: 4,
            seed: 0,
        }
    }
}

pub struct Denoiser {
    pub config: DenoiserConfig,
    pub params: ParamSet,
    ids: HashMap<String, ParamId>,
}

struct Ctx<'a> {
    bound: &'a [Var],
    ids: &'a HashMap<String, ParamId>,
}

impl Ctx<'_> {
    fn p(&self, name: &str) -> Var {
        self.bound[self.ids[name].0]
    }
}

impl Denoiser {
    pub fn new(config: DenoiserConfig) -> Self {
        let c = config.base_channels;
        let e = config.time_dim;
        let m = config.token_grid.pow(3);
        let mut params = ParamSet::new();
        let mut ids = HashMap::new();
        let seed = config.seed;

        let conv3 = |params: &mut ParamSet,
                         ids: &mut HashMap<String, ParamId>,
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
                    &mut layer_rng(seed, name),
                )
            };
            ids.insert(format!("{name}.w"), params.register(format!("{name}.w"), w));
            ids.insert(
                format!("{name}.b"),
                params.register(format!("{name}.b"), Tensor::zeros(vec![cout])),
            );
        };
        let mat = |params: &mut ParamSet,
                       ids: &mut HashMap<String, ParamId>,
                       name: &str,
                       rows: usize,
                       cols: usize,
                       zero: bool| {
            let w = if zero {
                Tensor::zeros(vec![rows, cols])
            } else {
                he_init(vec![rows, cols], cols, &mut layer_rng(seed, name))
            };
            ids.insert(format!("{name}.w"), params.register(format!("{name}.w"), w));
            ids.insert(
                format!("{name}.b"),
                params.register(format!("{name}.b"), Tensor::zeros(vec![rows])),
            );
        };
        let resblock = |params: &mut ParamSet,
                            ids: &mut HashMap<String, ParamId>,
                            name: &str,
                            ch: usize| {
            conv3(params, ids, &format!("{name}.conv1"), ch, ch, false);
            mat(params, ids, &format!("{name}.time"), ch, e, false);
            conv3(params, ids, &format!("{name}.conv2"), ch, ch, true);
        };
        let gate = |params: &mut ParamSet,
                        ids: &mut HashMap<String, ParamId>,
                        name: &str,
                        ch: usize| {
            mat(params, ids, &format!("{name}.wx"), ch, ch, false);
            mat(params, ids, &format!("{name}.wg"), ch, ch, false);
            let psi = format!("{name}.psi");
            ids.insert(
                format!("{psi}.w"),
                params.register(
                    format!("{psi}.w"),
                    he_init(vec![1, ch], ch, &mut layer_rng(seed, &psi)),
                ),
            );
            // Positive bias opens the gate at init so skip content flows
            // from the first step.
            ids.insert(
                format!("{psi}.b"),
                params.register(format!("{psi}.b"), Tensor::new(vec![1], vec![3.0])),
            );
        };
        let cip = |params: &mut ParamSet,
                       ids: &mut HashMap<String, ParamId>,
                       name: &str,
                       ch: usize,
                       text_dim: usize| {
            mat(params, ids, &format!("{name}.wq"), ch, text_dim, false);
            mat(params, ids, &format!("{name}.wk"), ch, text_dim, false);
            mat(params, ids, &format!("{name}.wv"), ch, ch, false);
            ids.insert(
                format!("{name}.bias"),
                params.register(format!("{name}.bias"), Tensor::zeros(vec![m, m])),
            );
            mat(params, ids, &format!("{name}.wo"), ch, ch, true);
        };

        conv3(&mut params, &mut ids, "stem", 2, c, false);
        resblock(&mut params, &mut ids, "enc1", c);
        conv3(&mut params, &mut ids, "down1", c, 2 * c, false);
        resblock(&mut params, &mut ids, "enc2", 2 * c);
        conv3(&mut params, &mut ids, "down2", 2 * c, 4 * c, false);
        resblock(&mut params, &mut ids, "mid", 4 * c);
        mat(&mut params, &mut ids, "up2", 2 * c, 4 * c, false);
        gate(&mut params, &mut ids, "gate2", 2 * c);
        mat(&mut params, &mut ids, "fuse2", 2 * c, 4 * c, false);
        resblock(&mut params, &mut ids, "dec2", 2 * c);
        if config.cross_attention {
            cip(&mut params, &mut ids, "cip2", 2 * c, config.text_dim);
        }
        mat(&mut params, &mut ids, "up1", c, 2 * c, false);
        gate(&mut params, &mut ids, "gate1", c);
        mat(&mut params, &mut ids, "fuse1", c, 2 * c, false);
        resblock(&mut params, &mut ids, "dec1", c);
        if config.cross_attention {
            cip(&mut params, &mut ids, "cip1", c, config.text_dim);
        }
        conv3(&mut params, &mut ids, "out", c, 1, true);

        Self {
            config,
            params,
            ids,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn resblock(&self, g: &mut Graph, ctx: &Ctx, name: &str, x: Var, t_emb: Var) -> Var {
        let h = g.silu(x);
        let h = g.conv3d(
            h,
            ctx.p(&format!("{name}.conv1.w")),
            ctx.p(&format!("{name}.conv1.b")),
            1,
            1,
        );
        let tb = g.linear(
            t_emb,
            ctx.p(&format!("{name}.time.w")),
            Some(ctx.p(&format!("{name}.time.b"))),
        );
        let h = g.add_channel_bias(h, tb);
        let h = g.silu(h);
        let h = g.conv3d(
            h,
            ctx.p(&format!("{name}.conv2.w")),
            ctx.p(&format!("{name}.conv2.b")),
            1,
            1,
        );
        g.add(x, h)
    }

    fn attention_gate(&self, g: &mut Graph, ctx: &Ctx, name: &str, skip: Var, gate: Var) -> Var {
        let ax = g.conv1x1(
            skip,
            ctx.p(&format!("{name}.wx.w")),
            Some(ctx.p(&format!("{name}.wx.b"))),
        );
        let ag = g.conv1x1(
            gate,
            ctx.p(&format!("{name}.wg.w")),
            Some(ctx.p(&format!("{name}.wg.b"))),
        );
        let a = g.add(ax, ag);
        let a = g.silu(a);
        let logits = g.conv1x1(
            a,
            ctx.p(&format!("{name}.psi.w")),
            Some(ctx.p(&format!("{name}.psi.b"))),
        );
        let alpha = g.sigmoid(logits);
        g.mul_spatial_gate(skip, alpha)
    }

    fn cip_block(&self, g: &mut Graph, ctx: &Ctx, name: &str, feat: Var, z: Var) -> Var {
        let grid = self.config.token_grid;
        let (_, sp) = g.value(feat).channels_spatial();
        let tokens4d = g.adaptive_avg_pool(feat, [grid, grid, grid]);
        let tokens = g.channels_to_rows(tokens4d);
        let weights = CrossAttentionWeights {
            wq: ctx.p(&format!("{name}.wq.w")),
            bq: ctx.p(&format!("{name}.wq.b")),
            wk: ctx.p(&format!("{name}.wk.w")),
            bk: ctx.p(&format!("{name}.wk.b")),
            wv: ctx.p(&format!("{name}.wv.w")),
            bv: ctx.p(&format!("{name}.wv.b")),
            bias: ctx.p(&format!("{name}.bias")),
        };
        let attn = g.cross_attention_tokens(z, tokens, &weights);
        // Attended values alone (the op adds tokens residually).
        let attended = g.sub(attn, tokens);
        let projected = g.linear(
            attended,
            ctx.p(&format!("{name}.wo.w")),
            Some(ctx.p(&format!("{name}.wo.b"))),
        );
        let field = g.rows_to_channels(projected, [grid, grid, grid]);
        let up = g.adaptive_unpool(field, sp);
        g.add(feat, up)
    }

    /// Build the prediction subgraph. `x_t` and `y0` are [1, S, S, S]
    /// inputs; `z` is the pooled text embedding when conditioning.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &[Var],
        x_t: Var,
        y0: Var,
        t: usize,
        z: Option<Var>,
    ) -> Var {
        let ctx = Ctx {
            bound,
            ids: &self.ids,
        };
        let (_, sp) = g.value(x_t).channels_spatial();
        assert!(
            sp.iter().all(|&d| d % 4 == 0),
            "denoiser input dims must be divisible by 4, got {sp:?}"
        );
        let t_emb = g.input(timestep_embedding(t, self.config.time_dim));

        let x = g.concat_channels(x_t, y0);
        let h0 = g.conv3d(x, ctx.p("stem.w"), ctx.p("stem.b"), 1, 1);
        let e1 = self.resblock(g, &ctx, "enc1", h0, t_emb);
        let d1 = g.conv3d(e1, ctx.p("down1.w"), ctx.p("down1.b"), 2, 1);
        let e2 = self.resblock(g, &ctx, "enc2", d1, t_emb);
        let d2 = g.conv3d(e2, ctx.p("down2.w"), ctx.p("down2.b"), 2, 1);
        let mid = self.resblock(g, &ctx, "mid", d2, t_emb);

        let u2 = g.upsample2x(mid);
        let u2 = g.conv1x1(u2, ctx.p("up2.w"), Some(ctx.p("up2.b")));
        let s2 = self.attention_gate(g, &ctx, "gate2", e2, u2);
        let cat2 = g.concat_channels(u2, s2);
        let f2 = g.conv1x1(cat2, ctx.p("fuse2.w"), Some(ctx.p("fuse2.b")));
        let mut dec2 = self.resblock(g, &ctx, "dec2", f2, t_emb);
        if let Some(zv) = z {
            if self.config.cross_attention {
                dec2 = self.cip_block(g, &ctx, "cip2", dec2, zv);
            }
        }

        let u1 = g.upsample2x(dec2);
        let u1 = g.conv1x1(u1, ctx.p("up1.w"), Some(ctx.p("up1.b")));
        let s1 = self.attention_gate(g, &ctx, "gate1", e1, u1);
        let cat1 = g.concat_channels(u1, s1);
        let f1 = g.conv1x1(cat1, ctx.p("fuse1.w"), Some(ctx.p("fuse1.b")));
        let mut dec1 = self.resblock(g, &ctx, "dec1", f1, t_emb);
        if let Some(zv) = z {
            if self.config.cross_attention {
                dec1 = self.cip_block(g, &ctx, "cip1", dec1, zv);
            }
        }

        g.conv3d(dec1, ctx.p("out.w"), ctx.p("out.b"), 1, 1)
    }

    /// Predict on plain tensors (single forward, gradients discarded).
    pub fn predict_tensor(&self, x_t: &Tensor, y0: &Tensor, t: usize, z: Option<&[f64]>) -> Tensor {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let xv = g.input(x_t.clone());
        let yv = g.input(y0.clone());
        let zv = z.map(|s| g.input(Tensor::new(vec![s.len()], s.to_vec())));
        let out = self.forward(&mut g, &bound, xv, yv, t, zv);
        g.value(out).clone()
    }
}

pub fn volume_to_tensor(v: &Volume) -> Tensor {
    let d = v.dims();
    Tensor::new(vec![1, d[2], d[1], d[0]], v.voxels().to_vec())
}

pub fn tensor_to_volume(t: &Tensor, like: &Volume) -> Volume {
    let d = like.dims();
    assert_eq!(t.shape, vec![1, d[2], d[1], d[0]], "tensor/volume shape");
    Volume::new(d, like.spacing(), t.data.clone()).expect("tensor and volume sizes agree")
}

impl DenoisePredictor for Denoiser {
    fn predict(
        &self,
        x_t: &Volume,
        y0: &Volume,
        t: usize,
        conditioning: Option<&[f64]>,
    ) -> Result<Volume> {
        x_t.check_same_dims(y0, "denoiser predict")?;
        let dims = x_t.dims();
        if dims.iter().any(|&d| d % 4 != 0) {
            return Err(CoreError::DimMismatch(format!(
                "denoiser needs dims divisible by 4, got {dims:?}"
            )));
        }
        if let Some(z) = conditioning {
            if z.len() != self.config.text_dim {
                return Err(CoreError::DimMismatch(format!(
                    "conditioning dim {} does not match text_dim {}",
                    z.len(),
                    self.config.text_dim
                )));
            }
            if !self.config.cross_attention {
                return Err(CoreError::InvalidArgument(
                    "conditioning passed to a denoiser without cross-attention".into(),
                ));
            }
        }
        let out = self.predict_tensor(
            &volume_to_tensor(x_t),
            &volume_to_tensor(y0),
            t,
            conditioning,
        );
        Ok(tensor_to_volume(&out, x_t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_initialized_output_is_zero() {
        let model = Denoiser::new(DenoiserConfig {
            base_channels: 4,
            ..DenoiserConfig::default()
        });
        let x = Tensor::new(vec![1, 8, 8, 8], (0..512).map(|i| i as f64 * 1e-3).collect());
        let y = Tensor::new(vec![1, 8, 8, 8], (0..512).map(|i| (i % 7) as f64 * 0.1).collect());
        let out = model.predict_tensor(&x, &y, 3, None);
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_preserved_across_patch_sizes() {
        let model = Denoiser::new(DenoiserConfig {
            base_channels: 4,
            ..DenoiserConfig::default()
        });
        for s in [8usize, 16] {
            let n = s * s * s;
            let x = Tensor::new(vec![1, s, s, s], vec![0.1; n]);
            let y = Tensor::new(vec![1, s, s, s], vec![0.2; n]);
            let out = model.predict_tensor(&x, &y, 1, None);
            assert_eq!(out.shape, vec![1, s, s, s]);
        }
    }

    #[test]
    fn conditioned_and_unconditioned_agree_at_init() {
        let cfg = DenoiserConfig {
            base_channels: 4,
            cross_attention: true,
            seed: 5,
            ..DenoiserConfig::default()
        };
        let cip = Denoiser::new(cfg.clone());
        let plain = Denoiser::new(DenoiserConfig {
            cross_attention: false,
            ..cfg
        });
        let s = 8;
        let n = s * s * s;
        let x = Tensor::new(
            vec![1, s, s, s],
            (0..n).map(|i| (i as f64 * 0.37).sin()).collect(),
        );
        let y = Tensor::new(
            vec![1, s, s, s],
            (0..n).map(|i| (i as f64 * 0.11).cos()).collect(),
        );
        let z = vec![0.3; cfg.text_dim];

        // Share the non-CIP weights, then nudge them off zero so the
        // comparison is not trivially 0 == 0.
        let mut shared = plain.params.flat();
        for (i, v) in shared.iter_mut().enumerate() {
            if *v == 0.0 {
                *v = ((i % 13) as f64 - 6.0) * 1e-3;
            }
        }
        let mut plain = plain;
        plain.params.set_flat(&shared);
        let mut cip = cip;
        let mut cip_flat = cip.params.flat();
        // Map the shared names onto the CIP model.
        let mut off_plain = 0usize;
        let mut off_cip = 0usize;
        for i in 0..cip.params.len() {
            let id = ParamId(i);
            let name = cip.params.name(id).to_string();
            let len = cip.params.tensor(id).len();
            if !name.starts_with("cip") {
                // Same registration order for shared layers.
                cip_flat[off_cip..off_cip + len]
                    .copy_from_slice(&shared[off_plain..off_plain + len]);
                off_plain += len;
            }
            off_cip += len;
        }
        cip.params.set_flat(&cip_flat);

        let a = plain.predict_tensor(&x, &y, 2, None);
        let b = cip.predict_tensor(&x, &y, 2, Some(&z));
        let c = cip.predict_tensor(&x, &y, 2, None);
        for ((va, vb), vc) in a.data.iter().zip(&b.data).zip(&c.data) {
            assert!((va - vb).abs() < 1e-12, "cip-with-z differs at init");
            assert!((vb - vc).abs() < 1e-12, "cip-without-z differs");
        }
    }

    #[test]
    fn rejects_indivisible_dims() {
        let model = Denoiser::new(DenoiserConfig::default());
        let v = Volume::zeros([10, 10, 10], [1.0; 3]);
        assert!(model.predict(&v, &v, 1, None).is_err());
    }
}
