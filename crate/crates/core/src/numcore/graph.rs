//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node holding
//! its output value. [`Graph::backward`] walks the tape in reverse, summing
//! gradient contributions per node, and adds the gradients of parameter
//! leaves into a [`ParameterSet`].

use crate::error::{Error, Result};
use crate::numcore::tensor::{gemm, MatRef};
use crate::numcore::{ParameterSet, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Input,
    Param(String),
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatLast(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Dynamic computation graph for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    differentiated: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all recorded nodes so the graph can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.differentiated = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf bound to the named parameter; its gradient flows back into the set.
    pub fn param(&mut self, params: &ParameterSet, name: &str) -> Result<Var> {
        let value = params.value(name)?.clone();
        Ok(self.push(value, Op::Param(name.to_string())))
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            MatRef::rows(self.value(a).data(), k),
            MatRef::rows(self.value(b).data(), n),
            &mut out,
            false,
        );
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// Batched product of `a[n×m×k]` with `b[n×k×p]`, or with `b[n×p×k]`
    /// transposed when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok =
            sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0] && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let p = if trans_b { sb[1] } else { sb[2] };
        let mut out = vec![0.0; batch * m * p];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            let a_i = &ad[i * m * k..(i + 1) * m * k];
            let b_i = &bd[i * k * p..(i + 1) * k * p];
            let b_ref = if trans_b {
                MatRef::transposed(b_i, k)
            } else {
                MatRef::rows(b_i, p)
            };
            gemm(
                m,
                k,
                p,
                MatRef::rows(a_i, k),
                b_ref,
                &mut out[i * m * p..(i + 1) * m * p],
                false,
            );
        }
        let t = Tensor::new(&[batch, m, p], out)?;
        Ok(self.push(t, Op::BatchMatMul { a, b, trans_b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, |va, vb| Op::Add(va, vb))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, |va, vb| Op::Mul(va, vb))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: impl FnOnce(Var, Var) -> Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape(), data)?;
        Ok(self.push(t, mk(a, b)))
    }

    /// Adds a `[d]` vector to every row of `x[..., d]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = tx.last_dim();
        if tb.numel() != d || tb.rank() != 1 {
            return Err(Error::shape("add_bias", tx.shape(), tb.shape()));
        }
        let bd = tb.data();
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            for (v, b) in row.iter_mut().zip(bd) {
                *v += b;
            }
        }
        let t = Tensor::new(tx.shape(), data)?;
        Ok(self.push(t, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let tx = self.value(x);
        let t = Tensor::new(tx.shape(), tx.data().iter().map(|v| v * s).collect()).expect("same shape");
        self.push(t, Op::Scale(x, s))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let t = Tensor::new(tx.shape(), data).expect("same shape");
        self.push(t, Op::Gelu(x))
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.last_dim();
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
        let t = Tensor::new(tx.shape(), data)?;
        Ok(self.push(t, Op::Softmax { x }))
    }

    /// Softmax over the last axis of `[..., m, m]` where row `i` only sees
    /// columns `j <= i`; masked entries come out as exact zeros.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.len() < 2 || s[s.len() - 1] != s[s.len() - 2] {
            return Err(Error::shape("causal_softmax", s, &[]));
        }
        let m = s[s.len() - 1];
        let mut data = tx.data().to_vec();
        for mat in data.chunks_exact_mut(m * m) {
            for (i, row) in mat.chunks_exact_mut(m).enumerate() {
                softmax_in_place(&mut row[..=i]);
                row[i + 1..].fill(0.0);
            }
        }
        let t = Tensor::new(tx.shape(), data)?;
        // The softmax backward only touches entries through the output, so
        // masked zeros contribute nothing; the plain rule applies.
        Ok(self.push(t, Op::Softmax { x }))
    }

    /// Layer normalization over the last axis with affine `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.last_dim();
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(Error::shape("layer_norm", tx.shape(), tg.shape()));
        }
        let rows = tx.numel() / d;
        let mut xhat = vec![0.0; tx.numel()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; tx.numel()];
        let (gd, bd) = (tg.data(), tb.data());
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gd[j] + bd[j];
            }
        }
        let t = Tensor::new(tx.shape(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Mean over rows of `-ln softmax(logits)[target]`, natural log.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        if tl.rank() != 2 || tl.shape()[0] != targets.len() {
            return Err(Error::shape("cross_entropy", tl.shape(), &[targets.len()]));
        }
        let v = tl.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Index {
                what: "target",
                index: bad,
                bound: v,
            });
        }
        let mut probs = tl.data().to_vec();
        let mut total = 0.0;
        for (row, &t) in probs.chunks_exact_mut(v).zip(targets) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            for x in row.iter_mut() {
                *x = (*x - lse).exp();
            }
        }
        let loss = total / targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Gathers rows of `table[V×d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(Error::shape("embedding", tt.shape(), &[]));
        }
        let (vocab, d) = (tt.shape()[0], tt.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index {
                    what: "embedding id",
                    index: id,
                    bound: vocab,
                });
            }
            out.extend_from_slice(tt.row(id));
        }
        let t = Tensor::new(&[ids.len(), d], out)?;
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Concatenates along the last axis; leading shapes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(Error::shape("concat_last", &first, s));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::ConcatLast(parts.to_vec())))
    }

    /// Concatenates along the first axis; trailing shapes must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || s[1..] != first[1..] {
                return Err(Error::shape("concat_rows", &first, s));
            }
            rows += s[0];
            out.extend_from_slice(self.value(p).data());
        }
        let mut shape = first.clone();
        shape[0] = rows;
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let mut seen = vec![false; tx.rank()];
        if perm.len() != tx.rank()
            || perm
                .iter()
                .any(|&p| p >= seen.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::shape("permute", tx.shape(), perm));
        }
        let (shape, data) = permute_data(tx.shape(), tx.data(), perm);
        let t = Tensor::new(&shape, data)?;
        Ok(self.push(t, Op::Permute(x, perm.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.sum() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    /// Reverse pass from a scalar `loss`, adding parameter gradients into
    /// `params`. A graph can be differentiated once; call [`Graph::reset`]
    /// before recording the next pass.
    pub fn backward(&mut self, loss: Var, params: &mut ParameterSet) -> Result<()> {
        if self.differentiated {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", self.shape(loss), &[1]));
        }
        self.differentiated = true;
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(name) => params.accumulate_grad(name, &g)?,
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        MatRef::rows(g.data(), n),
                        MatRef::transposed(tb.data(), n),
                        &mut da,
                        false,
                    );
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        MatRef::transposed(ta.data(), k),
                        MatRef::rows(g.data(), n),
                        &mut db,
                        false,
                    );
                    accumulate(&mut grads, *a, Tensor::new(&[m, k], da)?);
                    accumulate(&mut grads, *b, Tensor::new(&[k, n], db)?);
                }
                Op::BatchMatMul { a, b, trans_b } => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (batch, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                    let p = if *trans_b { tb.shape()[1] } else { tb.shape()[2] };
                    let mut da = vec![0.0; batch * m * k];
                    let mut db = vec![0.0; batch * k * p];
                    for i in 0..batch {
                        let g_i = &g.data()[i * m * p..(i + 1) * m * p];
                        let a_i = &ta.data()[i * m * k..(i + 1) * m * k];
                        let b_i = &tb.data()[i * k * p..(i + 1) * k * p];
                        let da_i = &mut da[i * m * k..(i + 1) * m * k];
                        let db_i = &mut db[i * k * p..(i + 1) * k * p];
                        if *trans_b {
                            // c = a·bᵀ with b[p×k]: da = g·b, db = gᵀ·a
                            gemm(m, p, k, MatRef::rows(g_i, p), MatRef::rows(b_i, k), da_i, false);
                            gemm(p, m, k, MatRef::transposed(g_i, p), MatRef::rows(a_i, k), db_i, false);
                        } else {
                            gemm(m, p, k, MatRef::rows(g_i, p), MatRef::transposed(b_i, p), da_i, false);
                            gemm(k, m, p, MatRef::transposed(a_i, k), MatRef::rows(g_i, p), db_i, false);
                        }
                    }
                    let (sa, sb) = (ta.shape().to_vec(), tb.shape().to_vec());
                    accumulate(&mut grads, *a, Tensor::new(&sa, da)?);
                    accumulate(&mut grads, *b, Tensor::new(&sb, db)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddBias(x, bias) => {
                    let d = g.last_dim();
                    let mut db = vec![0.0; d];
                    for row in g.data().chunks_exact(d) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *bias, Tensor::new(&[d], db)?);
                    accumulate(&mut grads, *x, g);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = g.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    let db = g.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, Tensor::new(g.shape(), da)?);
                    accumulate(&mut grads, *b, Tensor::new(g.shape(), db)?);
                }
                Op::Scale(x, s) => {
                    let d = g.data().iter().map(|v| v * s).collect();
                    accumulate(&mut grads, *x, Tensor::new(g.shape(), d)?);
                }
                Op::Gelu(x) => {
                    let tx = self.value(*x);
                    let d = g
                        .data()
                        .iter()
                        .zip(tx.data())
                        .map(|(&g, &v)| {
                            let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                            let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                            g * (0.5 * (1.0 + t) + 0.5 * v * dt)
                        })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::new(g.shape(), d)?);
                }
                Op::Softmax { x } => {
                    let y = &node.value;
                    let n = y.last_dim();
                    let mut dx = vec![0.0; y.numel()];
                    for ((dr, yr), gr) in dx
                        .chunks_exact_mut(n)
                        .zip(y.data().chunks_exact(n))
                        .zip(g.data().chunks_exact(n))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dr[j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::new(y.shape(), dx)?);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let d = g.last_dim();
                    let gd = self.value(*gain).data();
                    let mut dgain = vec![0.0; d];
                    let mut dbias = vec![0.0; d];
                    let mut dx = vec![0.0; g.numel()];
                    let mut dxhat = vec![0.0; d];
                    for (r, gr) in g.data().chunks_exact(d).enumerate() {
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            dgain[j] += gr[j] * hr[j];
                            dbias[j] += gr[j];
                            dxhat[j] = gr[j] * gd[j];
                            mean_dh += dxhat[j];
                            mean_dh_h += dxhat[j] * hr[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            dx[r * d + j] = rstd[r] * (dxhat[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    accumulate(&mut grads, *gain, Tensor::new(&[d], dgain)?);
                    accumulate(&mut grads, *bias, Tensor::new(&[d], dbias)?);
                    accumulate(&mut grads, *x, Tensor::new(g.shape(), dx)?);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = g.item() / targets.len() as f64;
                    let v = probs.len() / targets.len();
                    let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        d[r * v + t] -= scale;
                    }
                    accumulate(&mut grads, *logits, Tensor::new(&[targets.len(), v], d)?);
                }
                Op::Embedding { table, ids } => {
                    let st = self.value(*table).shape().to_vec();
                    let d = st[1];
                    let mut dt = vec![0.0; st[0] * d];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g.data()[r * d + j];
                        }
                    }
                    accumulate(&mut grads, *table, Tensor::new(&st, dt)?);
                }
                Op::ConcatLast(parts) => {
                    let total = g.last_dim();
                    let rows = g.numel() / total;
                    let mut off = 0;
                    for &p in parts {
                        let sp = self.shape(p).to_vec();
                        let w = *sp.last().unwrap();
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g.data()[r * total + off..r * total + off + w]);
                        }
                        off += w;
                        accumulate(&mut grads, p, Tensor::new(&sp, dp)?);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let sp = self.shape(p).to_vec();
                        let n: usize = sp.iter().product();
                        let dp = g.data()[off..off + n].to_vec();
                        off += n;
                        accumulate(&mut grads, p, Tensor::new(&sp, dp)?);
                    }
                }
                Op::Reshape(x) => {
                    let sx = self.shape(*x).to_vec();
                    accumulate(&mut grads, *x, g.reshaped(&sx)?);
                }
                Op::Permute(x, perm) => {
                    let mut inv = vec![0; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    let (shape, data) = permute_data(g.shape(), g.data(), &inv);
                    accumulate(&mut grads, *x, Tensor::new(&shape, data)?);
                }
                Op::Sum(x) => {
                    let sx = self.shape(*x).to_vec();
                    accumulate(&mut grads, *x, Tensor::full(&sx, g.item()));
                }
                Op::Mean(x) => {
                    let sx = self.shape(*x).to_vec();
                    let n: usize = sx.iter().product();
                    accumulate(&mut grads, *x, Tensor::full(&sx, g.item() / n as f64));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

fn permute_data(shape: &[usize], data: &[f64], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let inner = out_shape[rank - 1];
    let inner_stride = strides[rank - 1];
    'outer: loop {
        let base: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        for j in 0..inner {
            out.push(data[base + j * inner_stride]);
        }
        // odometer over all but the innermost axis
        let mut ax = rank - 1;
        loop {
            if ax == 0 {
                break 'outer;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}
