//! Spatial ops over [C, D, H, W] tensors: 3D convolution, pooling,
//! upsampling, channel concatenation, and channel-wise broadcasts.

use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

fn conv_out_dim(d: usize, k: usize, stride: usize, pad: usize) -> usize {
    (d + 2 * pad - k) / stride + 1
}

/// Direct 3D convolution forward. Shapes: x [Cin, D, H, W],
/// w [Cout, Cin, K, K, K], bias [Cout].
fn conv3d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (cin, [d, h, wd]) = x.channels_spatial();
    assert_eq!(w.shape.len(), 5, "conv weight must be 5-d");
    let (cout, wcin, k) = (w.shape[0], w.shape[1], w.shape[2]);
    assert_eq!(wcin, cin, "conv channel mismatch");
    assert_eq!(w.shape[3], k);
    assert_eq!(w.shape[4], k);
    assert_eq!(bias.shape, vec![cout]);
    let od = conv_out_dim(d, k, stride, pad);
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(wd, k, stride, pad);
    let mut out = vec![0.0; cout * od * oh * ow];

    for co in 0..cout {
        let b = bias.data[co];
        for v in &mut out[co * od * oh * ow..(co + 1) * od * oh * ow] {
            *v = b;
        }
        for ci in 0..cin {
            for kz in 0..k {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w.data[(((co * cin + ci) * k + kz) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        accumulate_shifted(
                            &mut out[co * od * oh * ow..(co + 1) * od * oh * ow],
                            &x.data[ci * d * h * wd..(ci + 1) * d * h * wd],
                            wv,
                            [od, oh, ow],
                            [d, h, wd],
                            [kz, ky, kx],
                            stride,
                            pad,
                        );
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, od, oh, ow], out)
}

/// out[zo,yo,xo] += wv * x[zo*s+kz-p, yo*s+ky-p, xo*s+kx-p] over valid taps.
#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_shifted(
    out: &mut [f64],
    x: &[f64],
    wv: f64,
    os: [usize; 3],
    xs: [usize; 3],
    tap: [usize; 3],
    stride: usize,
    pad: usize,
) {
    let Some([(z0, z1), (y0, y1), (x0, x1)]) = tap_ranges(os, xs, tap, stride, pad) else {
        return;
    };
    let [_, oh, ow] = os;
    let [_, h, wd] = xs;
    let [kz, ky, kx] = tap;
    for zo in z0..z1 {
        let zi = zo * stride + kz - pad;
        for yo in y0..y1 {
            let yi = yo * stride + ky - pad;
            let orow = &mut out[(zo * oh + yo) * ow..][x0..x1];
            let xin_base = (zi * h + yi) * wd + (x0 * stride + kx - pad);
            if stride == 1 {
                let xrow = &x[xin_base..xin_base + (x1 - x0)];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += wv * xv;
                }
            } else {
                for (i, o) in orow.iter_mut().enumerate() {
                    *o += wv * x[xin_base + i * stride];
                }
            }
        }
    }
}

/// Valid output ranges for one kernel tap (shared by forward and backward).
fn tap_ranges(
    [od, oh, ow]: [usize; 3],
    [d, h, wd]: [usize; 3],
    [kz, ky, kx]: [usize; 3],
    stride: usize,
    pad: usize,
) -> Option<[(usize, usize); 3]> {
    let valid = |out_dim: usize, k: usize, limit: usize| -> Option<(usize, usize)> {
        let lo = if pad > k {
            (pad - k).div_ceil(stride)
        } else {
            0
        };
        let bound = limit + pad;
        let hi = if bound > k {
            (((bound - k - 1) / stride) + 1).min(out_dim)
        } else {
            0
        };
        (lo < hi).then_some((lo, hi))
    };
    Some([valid(od, kz, d)?, valid(oh, ky, h)?, valid(ow, kx, wd)?])
}

/// dX[zi,yi,xi] += wv * dOut[zo,yo,xo] for the same index pairs as forward.
#[allow(clippy::too_many_arguments)]
#[inline]
fn scatter_shifted(
    gx: &mut [f64],
    gout: &[f64],
    wv: f64,
    os: [usize; 3],
    xs: [usize; 3],
    tap: [usize; 3],
    stride: usize,
    pad: usize,
) {
    let Some([(z0, z1), (y0, y1), (x0, x1)]) = tap_ranges(os, xs, tap, stride, pad) else {
        return;
    };
    let [_, oh, ow] = os;
    let [_, h, wd] = xs;
    let [kz, ky, kx] = tap;
    for zo in z0..z1 {
        let zi = zo * stride + kz - pad;
        for yo in y0..y1 {
            let yi = yo * stride + ky - pad;
            let grow = &gout[(zo * oh + yo) * ow..][x0..x1];
            let base = (zi * h + yi) * wd + (x0 * stride + kx - pad);
            if stride == 1 {
                let xrow = &mut gx[base..base + (x1 - x0)];
                for (o, &gz) in xrow.iter_mut().zip(grow) {
                    *o += wv * gz;
                }
            } else {
                for (i, &gz) in grow.iter().enumerate() {
                    gx[base + i * stride] += wv * gz;
                }
            }
        }
    }
}

/// dW tap = sum over spatial of x[shifted] * dOut.
#[allow(clippy::too_many_arguments)]
#[inline]
fn correlate_shifted(
    x: &[f64],
    gout: &[f64],
    os: [usize; 3],
    xs: [usize; 3],
    tap: [usize; 3],
    stride: usize,
    pad: usize,
) -> f64 {
    let Some([(z0, z1), (y0, y1), (x0, x1)]) = tap_ranges(os, xs, tap, stride, pad) else {
        return 0.0;
    };
    let [_, oh, ow] = os;
    let [_, h, wd] = xs;
    let [kz, ky, kx] = tap;
    let mut acc = 0.0;
    for zo in z0..z1 {
        let zi = zo * stride + kz - pad;
        for yo in y0..y1 {
            let yi = yo * stride + ky - pad;
            let grow = &gout[(zo * oh + yo) * ow..][x0..x1];
            let base = (zi * h + yi) * wd + (x0 * stride + kx - pad);
            if stride == 1 {
                let xrow = &x[base..base + (x1 - x0)];
                for (&gz, &xv) in grow.iter().zip(xrow) {
                    acc += gz * xv;
                }
            } else {
                for (i, &gz) in grow.iter().enumerate() {
                    acc += gz * x[base + i * stride];
                }
            }
        }
    }
    acc
}

impl Graph {
    /// 3D convolution with cubic kernel, zero padding.
    pub fn conv3d(&mut self, x: Var, w: Var, bias: Var, stride: usize, pad: usize) -> Var {
        let out = conv3d_forward(
            &self.values[x.0],
            &self.values[w.0],
            &self.values[bias.0],
            stride,
            pad,
        );
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let tw = &vals[w.0];
                let (cin, xs) = tx.channels_spatial();
                let (cout, os) = {
                    let (c, s) = g.channels_spatial();
                    (c, s)
                };
                let k = tw.shape[2];
                let xsize = xs[0] * xs[1] * xs[2];
                let osize = os[0] * os[1] * os[2];

                let mut gx = vec![0.0; cin * xsize];
                let mut gw = vec![0.0; tw.len()];
                let mut gb = vec![0.0; cout];
                for co in 0..cout {
                    let gout = &g.data[co * osize..(co + 1) * osize];
                    gb[co] += gout.iter().sum::<f64>();
                    for ci in 0..cin {
                        let xin = &tx.data[ci * xsize..(ci + 1) * xsize];
                        let gxc = &mut gx[ci * xsize..(ci + 1) * xsize];
                        for kz in 0..k {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let widx = (((co * cin + ci) * k + kz) * k + ky) * k + kx;
                                    let wv = tw.data[widx];
                                    if wv != 0.0 {
                                        scatter_shifted(
                                            gxc,
                                            gout,
                                            wv,
                                            os,
                                            xs,
                                            [kz, ky, kx],
                                            stride,
                                            pad,
                                        );
                                    }
                                    gw[widx] += correlate_shifted(
                                        xin,
                                        gout,
                                        os,
                                        xs,
                                        [kz, ky, kx],
                                        stride,
                                        pad,
                                    );
                                }
                            }
                        }
                    }
                }
                store.accumulate(x, Tensor::new(tx.shape.clone(), gx));
                store.accumulate(w, Tensor::new(tw.shape.clone(), gw));
                store.accumulate(bias, Tensor::new(vec![cout], gb));
            }),
        )
    }

    /// Pointwise (1x1x1) convolution: per-voxel linear map over channels.
    pub fn conv1x1(&mut self, x: Var, w: Var, bias: Option<Var>) -> Var {
        let tx = &self.values[x.0];
        let tw = &self.values[w.0];
        let (cin, sp) = tx.channels_spatial();
        assert_eq!(tw.shape.len(), 2);
        let (cout, wcin) = (tw.shape[0], tw.shape[1]);
        assert_eq!(wcin, cin, "conv1x1 channel mismatch");
        let n = sp[0] * sp[1] * sp[2];
        let mut out = vec![0.0; cout * n];
        for co in 0..cout {
            let orow = &mut out[co * n..(co + 1) * n];
            if let Some(bv) = bias {
                let b = self.values[bv.0].data[co];
                for o in orow.iter_mut() {
                    *o = b;
                }
            }
            for ci in 0..cin {
                let wv = tw.data[co * cin + ci];
                if wv == 0.0 {
                    continue;
                }
                let xrow = &tx.data[ci * n..(ci + 1) * n];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += wv * xv;
                }
            }
        }
        let shape = vec![cout, sp[0], sp[1], sp[2]];
        self.push(
            Tensor::new(shape, out),
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let tw = &vals[w.0];
                let mut gx = vec![0.0; cin * n];
                let mut gw = vec![0.0; cout * cin];
                for co in 0..cout {
                    let grow = &g.data[co * n..(co + 1) * n];
                    for ci in 0..cin {
                        let wv = tw.data[co * cin + ci];
                        let xrow = &tx.data[ci * n..(ci + 1) * n];
                        let gxrow = &mut gx[ci * n..(ci + 1) * n];
                        let mut dw = 0.0;
                        for ((gx_v, &gz), &xv) in gxrow.iter_mut().zip(grow).zip(xrow) {
                            *gx_v += wv * gz;
                            dw += gz * xv;
                        }
                        gw[co * cin + ci] = dw;
                    }
                }
                store.accumulate(x, Tensor::new(tx.shape.clone(), gx));
                store.accumulate(w, Tensor::new(vec![cout, cin], gw));
                if let Some(bv) = bias {
                    let mut gb = vec![0.0; cout];
                    for co in 0..cout {
                        gb[co] = g.data[co * n..(co + 1) * n].iter().sum();
                    }
                    store.accumulate(bv, Tensor::new(vec![cout], gb));
                }
            }),
        )
    }

    /// Nearest-neighbor 2x upsampling on all spatial axes.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let (c, [d, h, w]) = tx.channels_spatial();
        let (od, oh, ow) = (d * 2, h * 2, w * 2);
        let mut out = vec![0.0; c * od * oh * ow];
        for ci in 0..c {
            for z in 0..od {
                for y in 0..oh {
                    let src = ((ci * d + z / 2) * h + y / 2) * w;
                    let dst = ((ci * od + z) * oh + y) * ow;
                    for xx in 0..ow {
                        out[dst + xx] = tx.data[src + xx / 2];
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![c, od, oh, ow], out),
            Box::new(move |_vals, g, store| {
                let mut gx = vec![0.0; c * d * h * w];
                for ci in 0..c {
                    for z in 0..od {
                        for y in 0..oh {
                            let src = ((ci * d + z / 2) * h + y / 2) * w;
                            let dst = ((ci * od + z) * oh + y) * ow;
                            for xx in 0..ow {
                                gx[src + xx / 2] += g.data[dst + xx];
                            }
                        }
                    }
                }
                store.accumulate(x, Tensor::new(vec![c, d, h, w], gx));
            }),
        )
    }

    /// Adaptive average pooling to a fixed token grid per axis.
    pub fn adaptive_avg_pool(&mut self, x: Var, grid: [usize; 3]) -> Var {
        let tx = &self.values[x.0];
        let (c, sp) = tx.channels_spatial();
        for a in 0..3 {
            assert!(grid[a] >= 1 && grid[a] <= sp[a], "pool grid exceeds dims");
        }
        let bounds = |dim: usize, g: usize, i: usize| -> (usize, usize) {
            (i * dim / g, (i + 1) * dim / g)
        };
        let n_out = grid[0] * grid[1] * grid[2];
        let mut out = vec![0.0; c * n_out];
        for ci in 0..c {
            for gz in 0..grid[0] {
                let (z0, z1) = bounds(sp[0], grid[0], gz);
                for gy in 0..grid[1] {
                    let (y0, y1) = bounds(sp[1], grid[1], gy);
                    for gxx in 0..grid[2] {
                        let (x0, x1) = bounds(sp[2], grid[2], gxx);
                        let mut acc = 0.0;
                        for z in z0..z1 {
                            for y in y0..y1 {
                                let row = ((ci * sp[0] + z) * sp[1] + y) * sp[2];
                                for xx in x0..x1 {
                                    acc += tx.data[row + xx];
                                }
                            }
                        }
                        let count = ((z1 - z0) * (y1 - y0) * (x1 - x0)) as f64;
                        out[((ci * grid[0] + gz) * grid[1] + gy) * grid[2] + gxx] = acc / count;
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![c, grid[0], grid[1], grid[2]], out),
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let (c, sp) = tx.channels_spatial();
                let mut gx = vec![0.0; tx.len()];
                for ci in 0..c {
                    for gz in 0..grid[0] {
                        let (z0, z1) = bounds(sp[0], grid[0], gz);
                        for gy in 0..grid[1] {
                            let (y0, y1) = bounds(sp[1], grid[1], gy);
                            for gxx in 0..grid[2] {
                                let (x0, x1) = bounds(sp[2], grid[2], gxx);
                                let count = ((z1 - z0) * (y1 - y0) * (x1 - x0)) as f64;
                                let gz_v = g.data
                                    [((ci * grid[0] + gz) * grid[1] + gy) * grid[2] + gxx]
                                    / count;
                                for z in z0..z1 {
                                    for y in y0..y1 {
                                        let row = ((ci * sp[0] + z) * sp[1] + y) * sp[2];
                                        for xx in x0..x1 {
                                            gx[row + xx] += gz_v;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                store.accumulate(x, Tensor::new(tx.shape.clone(), gx));
            }),
        )
    }

    /// Inverse of `adaptive_avg_pool`'s indexing: each voxel takes its token
    /// cell's value (piecewise constant).
    pub fn adaptive_unpool(&mut self, tokens: Var, target: [usize; 3]) -> Var {
        let tt = &self.values[tokens.0];
        let (c, grid) = tt.channels_spatial();
        let cell = |dim: usize, g: usize, i: usize| -> usize {
            // inverse of bounds(): cell index whose [lo, hi) contains i
            ((i + 1) * g - 1) / dim
        };
        let mut out = vec![0.0; c * target[0] * target[1] * target[2]];
        for ci in 0..c {
            for z in 0..target[0] {
                let gz = cell(target[0], grid[0], z);
                for y in 0..target[1] {
                    let gy = cell(target[1], grid[1], y);
                    let dst = ((ci * target[0] + z) * target[1] + y) * target[2];
                    for xx in 0..target[2] {
                        let gxx = cell(target[2], grid[2], xx);
                        out[dst + xx] =
                            tt.data[((ci * grid[0] + gz) * grid[1] + gy) * grid[2] + gxx];
                    }
                }
            }
        }
        self.push(
            Tensor::new(vec![c, target[0], target[1], target[2]], out),
            Box::new(move |vals, g, store| {
                let tt = &vals[tokens.0];
                let mut gt = vec![0.0; tt.len()];
                for ci in 0..c {
                    for z in 0..target[0] {
                        let gz = cell(target[0], grid[0], z);
                        for y in 0..target[1] {
                            let gy = cell(target[1], grid[1], y);
                            let src = ((ci * target[0] + z) * target[1] + y) * target[2];
                            for xx in 0..target[2] {
                                let gxx = cell(target[2], grid[2], xx);
                                gt[((ci * grid[0] + gz) * grid[1] + gy) * grid[2] + gxx] +=
                                    g.data[src + xx];
                            }
                        }
                    }
                }
                store.accumulate(tokens, Tensor::new(tt.shape.clone(), gt));
            }),
        )
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let (c, sp) = tx.channels_spatial();
        let n = sp[0] * sp[1] * sp[2];
        let mut out = vec![0.0; c];
        for ci in 0..c {
            out[ci] = tx.data[ci * n..(ci + 1) * n].iter().sum::<f64>() / n as f64;
        }
        self.push(
            Tensor::new(vec![c], out),
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let mut gx = vec![0.0; tx.len()];
                for ci in 0..c {
                    let gv = g.data[ci] / n as f64;
                    for v in &mut gx[ci * n..(ci + 1) * n] {
                        *v = gv;
                    }
                }
                store.accumulate(x, Tensor::new(tx.shape.clone(), gx));
            }),
        )
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (ca, sa) = self.values[a.0].channels_spatial();
        let (cb, sb) = self.values[b.0].channels_spatial();
        assert_eq!(sa, sb, "concat spatial mismatch");
        let mut data = Vec::with_capacity((ca + cb) * sa[0] * sa[1] * sa[2]);
        data.extend_from_slice(&self.values[a.0].data);
        data.extend_from_slice(&self.values[b.0].data);
        let n = sa[0] * sa[1] * sa[2];
        self.push(
            Tensor::new(vec![ca + cb, sa[0], sa[1], sa[2]], data),
            Box::new(move |vals, g, store| {
                store.accumulate(
                    a,
                    Tensor::new(vals[a.0].shape.clone(), g.data[..ca * n].to_vec()),
                );
                store.accumulate(
                    b,
                    Tensor::new(vals[b.0].shape.clone(), g.data[ca * n..].to_vec()),
                );
            }),
        )
    }

    /// Add a per-channel bias [C] across all spatial positions.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Var {
        let tx = &self.values[x.0];
        let tb = &self.values[bias.0];
        let (c, sp) = tx.channels_spatial();
        assert_eq!(tb.shape, vec![c], "channel bias mismatch");
        let n = sp[0] * sp[1] * sp[2];
        let mut out = tx.data.clone();
        for ci in 0..c {
            let b = tb.data[ci];
            for v in &mut out[ci * n..(ci + 1) * n] {
                *v += b;
            }
        }
        self.push(
            Tensor::new(tx.shape.clone(), out),
            Box::new(move |_vals, g, store| {
                store.accumulate(x, g.clone());
                let mut gb = vec![0.0; c];
                for ci in 0..c {
                    gb[ci] = g.data[ci * n..(ci + 1) * n].iter().sum();
                }
                store.accumulate(bias, Tensor::new(vec![c], gb));
            }),
        )
    }

    /// Multiply every channel of x by a single-channel spatial field
    /// alpha [1, D, H, W]; used by attention gates.
    pub fn mul_spatial_gate(&mut self, x: Var, alpha: Var) -> Var {
        let tx = &self.values[x.0];
        let ta = &self.values[alpha.0];
        let (c, sp) = tx.channels_spatial();
        let (ca, spa) = ta.channels_spatial();
        assert_eq!(ca, 1, "gate must be single channel");
        assert_eq!(sp, spa, "gate spatial mismatch");
        let n = sp[0] * sp[1] * sp[2];
        let mut out = vec![0.0; tx.len()];
        for ci in 0..c {
            for i in 0..n {
                out[ci * n + i] = tx.data[ci * n + i] * ta.data[i];
            }
        }
        self.push(
            Tensor::new(tx.shape.clone(), out),
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let ta = &vals[alpha.0];
                let mut gx = vec![0.0; tx.len()];
                let mut galpha = vec![0.0; n];
                for ci in 0..c {
                    for i in 0..n {
                        let gz = g.data[ci * n + i];
                        gx[ci * n + i] = gz * ta.data[i];
                        galpha[i] += gz * tx.data[ci * n + i];
                    }
                }
                store.accumulate(x, Tensor::new(tx.shape.clone(), gx));
                store.accumulate(alpha, Tensor::new(ta.shape.clone(), galpha));
            }),
        )
    }

    /// [C, D, H, W] -> [M, C] with M = D*H*W (token rows).
    pub fn channels_to_rows(&mut self, x: Var) -> Var {
        let tx = &self.values[x.0];
        let (c, sp) = tx.channels_spatial();
        let m = sp[0] * sp[1] * sp[2];
        let mut out = vec![0.0; m * c];
        for ci in 0..c {
            for i in 0..m {
                out[i * c + ci] = tx.data[ci * m + i];
            }
        }
        self.push(
            Tensor::new(vec![m, c], out),
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let mut gx = vec![0.0; tx.len()];
                for ci in 0..c {
                    for i in 0..m {
                        gx[ci * m + i] = g.data[i * c + ci];
                    }
                }
                store.accumulate(x, Tensor::new(tx.shape.clone(), gx));
            }),
        )
    }

    /// [M, C] -> [C, d0, d1, d2] with M = d0*d1*d2.
    pub fn rows_to_channels(&mut self, x: Var, spatial: [usize; 3]) -> Var {
        let tx = &self.values[x.0];
        assert_eq!(tx.shape.len(), 2);
        let (m, c) = (tx.shape[0], tx.shape[1]);
        assert_eq!(m, spatial[0] * spatial[1] * spatial[2]);
        let mut out = vec![0.0; m * c];
        for i in 0..m {
            for ci in 0..c {
                out[ci * m + i] = tx.data[i * c + ci];
            }
        }
        self.push(
            Tensor::new(vec![c, spatial[0], spatial[1], spatial[2]], out),
            Box::new(move |_vals, g, store| {
                let mut gx = vec![0.0; m * c];
                for i in 0..m {
                    for ci in 0..c {
                        gx[i * c + ci] = g.data[ci * m + i];
                    }
                }
                store.accumulate(x, Tensor::new(vec![m, c], gx));
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv3d_identity_kernel_passes_through() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(
            vec![1, 3, 3, 3],
            (0..27).map(|i| i as f64).collect(),
        ));
        // 3x3x3 kernel that is 1 at the center.
        let mut wdata = vec![0.0; 27];
        wdata[13] = 1.0;
        let w = g.input(Tensor::new(vec![1, 1, 3, 3, 3], wdata));
        let b = g.input(Tensor::zeros(vec![1]));
        let y = g.conv3d(x, w, b, 1, 1);
        assert_eq!(g.value(y).shape, vec![1, 3, 3, 3]);
        assert_eq!(g.value(y).data, g.value(x).data);
    }

    #[test]
    fn conv3d_counts_neighbors_with_ones_kernel() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 2, 2, 2], vec![1.0; 8]));
        let w = g.input(Tensor::new(vec![1, 1, 3, 3, 3], vec![1.0; 27]));
        let b = g.input(Tensor::zeros(vec![1]));
        let y = g.conv3d(x, w, b, 1, 1);
        // Every output voxel of a 2^3 all-ones volume sees exactly 8 inputs.
        assert!(g.value(y).data.iter().all(|&v| v == 8.0));
    }

    #[test]
    fn conv3d_stride2_shape() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(vec![2, 8, 8, 8]));
        let w = g.input(Tensor::zeros(vec![4, 2, 3, 3, 3]));
        let b = g.input(Tensor::zeros(vec![4]));
        let y = g.conv3d(x, w, b, 2, 1);
        assert_eq!(g.value(y).shape, vec![4, 4, 4, 4]);
    }

    #[test]
    fn upsample_then_pool_is_identity() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(
            vec![1, 2, 2, 2],
            (0..8).map(|i| i as f64).collect(),
        ));
        let up = g.upsample2x(x);
        let back = g.adaptive_avg_pool(up, [2, 2, 2]);
        assert_eq!(g.value(back).data, g.value(x).data);
    }

    #[test]
    fn adaptive_pool_uneven_blocks() {
        let mut g = Graph::new();
        // 1 channel, 3 voxels along one axis pooled to 2 cells: [0], [1,2].
        let x = g.input(Tensor::new(vec![1, 3, 1, 1], vec![3.0, 5.0, 7.0]));
        let p = g.adaptive_avg_pool(x, [2, 1, 1]);
        assert_eq!(g.value(p).data, vec![3.0, 6.0]);
        let u = g.adaptive_unpool(p, [3, 1, 1]);
        assert_eq!(g.value(u).data, vec![3.0, 6.0, 6.0]);
    }

    #[test]
    fn concat_and_bias_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![1, 2, 1, 1], vec![1.0, 2.0]));
        let b = g.input(Tensor::new(vec![2, 2, 1, 1], vec![3.0, 4.0, 5.0, 6.0]));
        let c = g.concat_channels(a, b);
        assert_eq!(g.value(c).shape, vec![3, 2, 1, 1]);
        let bias = g.input(Tensor::new(vec![3], vec![10.0, 20.0, 30.0]));
        let y = g.add_channel_bias(c, bias);
        assert_eq!(g.value(y).data, vec![11.0, 12.0, 23.0, 24.0, 35.0, 36.0]);
    }
}
