//! Minimal reverse-mode autodiff tape over `Tensor`.
//!
//! Every op appends a value plus a backward closure that scatters the
//! incoming gradient to its parents. `backward(loss)` walks the tape in
//! reverse; gradients of interior nodes are dropped as soon as they have
//! been consumed so peak memory stays near the forward footprint.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

pub(crate) type BackFn = Box<dyn Fn(&[Tensor], &Tensor, &mut GradStore)>;

pub struct GradStore {
    grads: Vec<Option<Tensor>>,
}

impl GradStore {
    pub fn accumulate(&mut self, v: Var, g: Tensor) {
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Graph {
    pub(crate) values: Vec<Tensor>,
    pub(crate) backwards: Vec<Option<BackFn>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.values.push(t);
        self.backwards.push(None);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub(crate) fn push(&mut self, t: Tensor, back: BackFn) -> Var {
        self.values.push(t);
        self.backwards.push(Some(back));
        Var(self.values.len() - 1)
    }

    /// Reverse pass from a scalar loss. Returns a store holding gradients
    /// for leaf vars (params and inputs).
    pub fn backward(&mut self, loss: Var) -> GradStore {
        assert_eq!(self.values[loss.0].len(), 1, "backward needs a scalar loss");
        let mut store = GradStore {
            grads: vec![None; self.values.len()],
        };
        store.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..self.values.len()).rev() {
            if self.backwards[i].is_none() {
                continue; // leaf: keep its gradient for the caller
            }
            let Some(grad_out) = store.grads[i].take() else {
                continue;
            };
            let back = self.backwards[i].as_ref().unwrap();
            back(&self.values, &grad_out, &mut store);
        }
        store
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert!(ta.same_shape(tb), "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape.clone(), data);
        self.push(
            out,
            Box::new(move |_vals, g, store| {
                store.accumulate(a, g.clone());
                store.accumulate(b, g.clone());
            }),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert!(ta.same_shape(tb), "sub shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(ta.shape.clone(), data);
        self.push(
            out,
            Box::new(move |_vals, g, store| {
                store.accumulate(a, g.clone());
                let neg = Tensor::new(g.shape.clone(), g.data.iter().map(|&x| -x).collect());
                store.accumulate(b, neg);
            }),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert!(ta.same_shape(tb), "mul shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(ta.shape.clone(), data);
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let ga = Tensor::new(
                    g.shape.clone(),
                    g.data
                        .iter()
                        .zip(&vals[b.0].data)
                        .map(|(&gz, &y)| gz * y)
                        .collect(),
                );
                let gb = Tensor::new(
                    g.shape.clone(),
                    g.data
                        .iter()
                        .zip(&vals[a.0].data)
                        .map(|(&gz, &x)| gz * x)
                        .collect(),
                );
                store.accumulate(a, ga);
                store.accumulate(b, gb);
            }),
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.values[a.0];
        let out = Tensor::new(ta.shape.clone(), ta.data.iter().map(|&x| c * x).collect());
        self.push(
            out,
            Box::new(move |_vals, g, store| {
                store.accumulate(
                    a,
                    Tensor::new(g.shape.clone(), g.data.iter().map(|&x| c * x).collect()),
                );
            }),
        )
    }

    /// a + scalar_var (broadcast over all elements of a).
    pub fn add_scalar_var(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.values[s.0].len(), 1, "add_scalar_var needs scalar");
        let sv = self.values[s.0].data[0];
        let ta = &self.values[a.0];
        let out = Tensor::new(ta.shape.clone(), ta.data.iter().map(|&x| x + sv).collect());
        self.push(
            out,
            Box::new(move |_vals, g, store| {
                store.accumulate(a, g.clone());
                store.accumulate(s, Tensor::scalar(g.data.iter().sum()));
            }),
        )
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        let data = ta
            .data
            .iter()
            .map(|&x| x * (1.0 / (1.0 + (-x).exp())))
            .collect();
        let out = Tensor::new(ta.shape.clone(), data);
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let x = &vals[a.0];
                let gx = Tensor::new(
                    g.shape.clone(),
                    g.data
                        .iter()
                        .zip(&x.data)
                        .map(|(&gz, &xv)| {
                            let s = 1.0 / (1.0 + (-xv).exp());
                            gz * (s * (1.0 + xv * (1.0 - s)))
                        })
                        .collect(),
                );
                store.accumulate(a, gx);
            }),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        let data: Vec<f64> = ta.data.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
        let out = Tensor::new(ta.shape.clone(), data);
        let out_id = Var(self.values.len());
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let z = &vals[out_id.0];
                let gx = Tensor::new(
                    g.shape.clone(),
                    g.data
                        .iter()
                        .zip(&z.data)
                        .map(|(&gz, &zv)| gz * zv * (1.0 - zv))
                        .collect(),
                );
                store.accumulate(a, gx);
            }),
        )
    }

    // ---- reductions and losses ----

    pub fn mean_all(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        let n = ta.len() as f64;
        let out = Tensor::scalar(ta.data.iter().sum::<f64>() / n);
        let shape = ta.shape.clone();
        self.push(
            out,
            Box::new(move |_vals, g, store| {
                let gv = g.data[0] / n;
                store.accumulate(a, Tensor::new(shape.clone(), vec![gv; shape.iter().product()]));
            }),
        )
    }

    /// Mean squared error between same-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert!(ta.same_shape(tb) && ta.shape.len() == 1, "dot needs equal vectors");
        let out = Tensor::scalar(ta.data.iter().zip(&tb.data).map(|(&x, &y)| x * y).sum());
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let gz = g.data[0];
                let ga = Tensor::new(
                    vals[b.0].shape.clone(),
                    vals[b.0].data.iter().map(|&y| gz * y).collect(),
                );
                let gb = Tensor::new(
                    vals[a.0].shape.clone(),
                    vals[a.0].data.iter().map(|&x| gz * x).collect(),
                );
                store.accumulate(a, ga);
                store.accumulate(b, gb);
            }),
        )
    }

    /// Binary cross-entropy on a single logit with a constant target.
    pub fn bce_with_logit(&mut self, logit: Var, target: f64) -> Var {
        let x = self.values[logit.0].item();
        // softplus(x) - target * x, computed stably.
        let softplus = if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        };
        let out = Tensor::scalar(softplus - target * x);
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let xv = vals[logit.0].item();
                let sig = 1.0 / (1.0 + (-xv).exp());
                store.accumulate(logit, Tensor::scalar(g.data[0] * (sig - target)));
            }),
        )
    }

    /// Diagonal-target cross entropy over rows of a square logit matrix:
    /// mean_i [logsumexp(S_i,:) - S_ii].
    pub fn info_nce_diag(&mut self, logits: Var) -> Var {
        let t = &self.values[logits.0];
        assert_eq!(t.shape.len(), 2, "info_nce_diag needs a matrix");
        let n = t.shape[0];
        assert_eq!(t.shape[1], n, "info_nce_diag needs a square matrix");
        let mut loss = 0.0;
        for i in 0..n {
            let row = &t.data[i * n..(i + 1) * n];
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            loss += lse - row[i];
        }
        let out = Tensor::scalar(loss / n as f64);
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let t = &vals[logits.0];
                let gz = g.data[0] / n as f64;
                let mut grad = vec![0.0; n * n];
                for i in 0..n {
                    let row = &t.data[i * n..(i + 1) * n];
                    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let denom: f64 = row.iter().map(|&x| (x - m).exp()).sum();
                    for j in 0..n {
                        let p = (row[j] - m).exp() / denom;
                        grad[i * n + j] = gz * (p - if i == j { 1.0 } else { 0.0 });
                    }
                }
                store.accumulate(logits, Tensor::new(vec![n, n], grad));
            }),
        )
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(ta.shape.len(), 2);
        assert_eq!(tb.shape.len(), 2);
        let (m, k) = (ta.shape[0], ta.shape[1]);
        let (k2, n) = (tb.shape[0], tb.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let av = ta.data[i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let brow = &tb.data[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        self.push(
            Tensor::new(vec![m, n], out),
            Box::new(move |vals, g, store| {
                let ta = &vals[a.0];
                let tb = &vals[b.0];
                // dA = g . B^T
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gz = g.data[i * n + j];
                        if gz == 0.0 {
                            continue;
                        }
                        for kk in 0..k {
                            ga[i * k + kk] += gz * tb.data[kk * n + j];
                        }
                    }
                }
                // dB = A^T . g
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for kk in 0..k {
                        let av = ta.data[i * k + kk];
                        if av == 0.0 {
                            continue;
                        }
                        let grow = &g.data[i * n..(i + 1) * n];
                        let brow = &mut gb[kk * n..(kk + 1) * n];
                        for (bg, &gz) in brow.iter_mut().zip(grow) {
                            *bg += av * gz;
                        }
                    }
                }
                store.accumulate(a, Tensor::new(vec![m, k], ga));
                store.accumulate(b, Tensor::new(vec![k, n], gb));
            }),
        )
    }

    pub fn transpose2d(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        assert_eq!(ta.shape.len(), 2);
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ta.data[i * n + j];
            }
        }
        self.push(
            Tensor::new(vec![n, m], out),
            Box::new(move |_vals, g, store| {
                let mut gt = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        gt[i * n + j] = g.data[j * m + i];
                    }
                }
                store.accumulate(a, Tensor::new(vec![m, n], gt));
            }),
        )
    }

    /// x [in] or [rows, in] times weight [out, in] plus optional bias [out].
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let tx = &self.values[x.0];
        let tw = &self.values[w.0];
        assert_eq!(tw.shape.len(), 2);
        let (out_dim, in_dim) = (tw.shape[0], tw.shape[1]);
        let (rows, vec_input) = match tx.shape.len() {
            1 => {
                assert_eq!(tx.shape[0], in_dim, "linear input dim");
                (1, true)
            }
            2 => {
                assert_eq!(tx.shape[1], in_dim, "linear input dim");
                (tx.shape[0], false)
            }
            _ => panic!("linear expects vector or matrix input"),
        };
        let mut out = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xrow = &tx.data[r * in_dim..(r + 1) * in_dim];
            for o in 0..out_dim {
                let wrow = &tw.data[o * in_dim..(o + 1) * in_dim];
                let mut acc = 0.0;
                for (xv, wv) in xrow.iter().zip(wrow) {
                    acc += xv * wv;
                }
                out[r * out_dim + o] = acc;
            }
        }
        if let Some(bv) = b {
            let tb = &self.values[bv.0];
            assert_eq!(tb.shape, vec![out_dim]);
            for r in 0..rows {
                for o in 0..out_dim {
                    out[r * out_dim + o] += tb.data[o];
                }
            }
        }
        let shape = if vec_input {
            vec![out_dim]
        } else {
            vec![rows, out_dim]
        };
        self.push(
            Tensor::new(shape, out),
            Box::new(move |vals, g, store| {
                let tx = &vals[x.0];
                let tw = &vals[w.0];
                let mut gx = vec![0.0; rows * in_dim];
                let mut gw = vec![0.0; out_dim * in_dim];
                for r in 0..rows {
                    let xrow = &tx.data[r * in_dim..(r + 1) * in_dim];
                    let grow = &g.data[r * out_dim..(r + 1) * out_dim];
                    let gxrow = &mut gx[r * in_dim..(r + 1) * in_dim];
                    for o in 0..out_dim {
                        let gz = grow[o];
                        if gz == 0.0 {
                            continue;
                        }
                        let wrow = &tw.data[o * in_dim..(o + 1) * in_dim];
                        for i in 0..in_dim {
                            gxrow[i] += gz * wrow[i];
                            gw[o * in_dim + i] += gz * xrow[i];
                        }
                    }
                }
                store.accumulate(
                    x,
                    Tensor::new(
                        if vec_input {
                            vec![in_dim]
                        } else {
                            vec![rows, in_dim]
                        },
                        gx,
                    ),
                );
                store.accumulate(w, Tensor::new(vec![out_dim, in_dim], gw));
                if let Some(bv) = b {
                    let mut gb = vec![0.0; out_dim];
                    for r in 0..rows {
                        for o in 0..out_dim {
                            gb[o] += g.data[r * out_dim + o];
                        }
                    }
                    store.accumulate(bv, Tensor::new(vec![out_dim], gb));
                }
            }),
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        assert_eq!(ta.shape.len(), 2);
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &ta.data[i * n..(i + 1) * n];
            let mx = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out[i * n + j] /= sum;
            }
        }
        let out_id = Var(self.values.len());
        self.push(
            Tensor::new(vec![m, n], out),
            Box::new(move |vals, g, store| {
                let z = &vals[out_id.0];
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    let zrow = &z.data[i * n..(i + 1) * n];
                    let grow = &g.data[i * n..(i + 1) * n];
                    let dot: f64 = zrow.iter().zip(grow).map(|(&zv, &gv)| zv * gv).sum();
                    for j in 0..n {
                        gx[i * n + j] = zrow[j] * (grow[j] - dot);
                    }
                }
                store.accumulate(a, Tensor::new(vec![m, n], gx));
            }),
        )
    }

    /// Repeat a vector [d] into rows of an [m, d] matrix.
    pub fn broadcast_row(&mut self, v: Var, m: usize) -> Var {
        let tv = &self.values[v.0];
        assert_eq!(tv.shape.len(), 1);
        let d = tv.shape[0];
        let mut out = Vec::with_capacity(m * d);
        for _ in 0..m {
            out.extend_from_slice(&tv.data);
        }
        self.push(
            Tensor::new(vec![m, d], out),
            Box::new(move |_vals, g, store| {
                let mut gv = vec![0.0; d];
                for r in 0..m {
                    for j in 0..d {
                        gv[j] += g.data[r * d + j];
                    }
                }
                store.accumulate(v, Tensor::new(vec![d], gv));
            }),
        )
    }

    /// L2-normalize a vector; zero vectors pass through unchanged.
    pub fn l2_normalize(&mut self, a: Var) -> Var {
        let ta = &self.values[a.0];
        assert_eq!(ta.shape.len(), 1);
        let norm = ta.data.iter().map(|&x| x * x).sum::<f64>().sqrt();
        let d = ta.shape[0];
        if norm < 1e-12 {
            let out = ta.clone();
            return self.push(
                out,
                Box::new(move |_vals, g, store| {
                    store.accumulate(a, g.clone());
                }),
            );
        }
        let out = Tensor::new(
            ta.shape.clone(),
            ta.data.iter().map(|&x| x / norm).collect(),
        );
        let out_id = Var(self.values.len());
        self.push(
            out,
            Box::new(move |vals, g, store| {
                let z = &vals[out_id.0];
                let zdotg: f64 = z.data.iter().zip(&g.data).map(|(&zv, &gv)| zv * gv).sum();
                let gx = Tensor::new(
                    vec![d],
                    z.data
                        .iter()
                        .zip(&g.data)
                        .map(|(&zv, &gv)| (gv - zv * zdotg) / norm)
                        .collect(),
                );
                store.accumulate(a, gx);
            }),
        )
    }

    /// Mean of selected rows of a table [V, d]; used by the text encoder.
    pub fn gather_rows_mean(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let tt = &self.values[table.0];
        assert_eq!(tt.shape.len(), 2);
        let (v, d) = (tt.shape[0], tt.shape[1]);
        assert!(!ids.is_empty(), "gather_rows_mean needs at least one id");
        for &id in &ids {
            assert!(id < v, "token id {id} out of vocabulary {v}");
        }
        let mut out = vec![0.0; d];
        for &id in &ids {
            for j in 0..d {
                out[j] += tt.data[id * d + j];
            }
        }
        let n = ids.len() as f64;
        for o in &mut out {
            *o /= n;
        }
        self.push(
            Tensor::new(vec![d], out),
            Box::new(move |_vals, g, store| {
                let mut gt = vec![0.0; v * d];
                for &id in &ids {
                    for j in 0..d {
                        gt[id * d + j] += g.data[j] / n;
                    }
                }
                store.accumulate(table, Tensor::new(vec![v, d], gt));
            }),
        )
    }

    /// Stack k vectors of equal length into a [k, d] matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty());
        let d = self.values[rows[0].0].shape[0];
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let tr = &self.values[r.0];
            assert_eq!(tr.shape, vec![d], "stack_rows needs equal vectors");
            out.extend_from_slice(&tr.data);
        }
        let rows_owned: Vec<Var> = rows.to_vec();
        self.push(
            Tensor::new(vec![rows.len(), d], out),
            Box::new(move |_vals, g, store| {
                for (i, &r) in rows_owned.iter().enumerate() {
                    store.accumulate(r, Tensor::new(vec![d], g.data[i * d..(i + 1) * d].to_vec()));
                }
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_mul_backward() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
        let b = g.input(Tensor::new(vec![3], vec![4.0, 5.0, 6.0]));
        let s = g.add(a, b);
        let p = g.mul(s, b);
        let loss = g.mean_all(p);
        let grads = g.backward(loss);
        // d/da_i mean((a+b)*b) = b_i / 3
        let ga = grads.get(a).unwrap();
        for (i, &expect) in [4.0 / 3.0, 5.0 / 3.0, 2.0].iter().enumerate() {
            assert!((ga.data[i] - expect).abs() < 1e-12);
        }
        // d/db_i = (a_i + 2 b_i) / 3
        let gb = grads.get(b).unwrap();
        for (i, &expect) in [3.0, 4.0, 5.0].iter().enumerate() {
            assert!((gb.data[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_manual() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = g.input(Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data, vec![19.0, 22.0, 43.0, 50.0]);
        let loss = g.mean_all(c);
        let grads = g.backward(loss);
        // dA = (g/4) . B^T where g is all-ones -> row sums of B^T
        let ga = grads.get(a).unwrap();
        assert!((ga.data[0] - 11.0 / 4.0).abs() < 1e-12);
        assert!((ga.data[1] - 15.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sums_to_one() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![2, 3], vec![0.1, 1.0, -2.0, 5.0, 5.0, 5.0]));
        let s = g.softmax_rows(a);
        let v = g.value(s);
        for i in 0..2 {
            let sum: f64 = v.data[i * 3..(i + 1) * 3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!((v.data[3] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn info_nce_uniform_logits_is_ln_n() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(vec![2, 2]));
        let l = g.info_nce_diag(a);
        assert!((g.value(l).item() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn l2_normalize_unit_norm() {
        let mut g = Graph::new();
        let a = g.input(Tensor::new(vec![3], vec![3.0, 0.0, 4.0]));
        let n = g.l2_normalize(a);
        let v = g.value(n);
        let norm: f64 = v.data.iter().map(|&x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((v.data[0] - 0.6).abs() < 1e-12);
    }
}
