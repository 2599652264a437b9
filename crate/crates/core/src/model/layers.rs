//! Building blocks shared by all variants: sinusoidal positions, linear
//! layers and the pre-norm causal decoder stack.

use crate::error::{Error, Result};
use rand::Rng as _;

use crate::numcore::{Graph, ParameterSet, Tensor, Var};
use crate::rng::Rng;

pub const LN_EPS: f64 = 1e-5;

/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(...)`, `t` from 0.
pub fn sinusoidal_pe(len: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("positional encoding width {dim} must be even")));
    }
    let mut data = Vec::with_capacity(len * dim);
    for t in 0..len {
        for i in 0..dim / 2 {
            let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            data.push(angle.sin());
            data.push(angle.cos());
        }
    }
    Tensor::new(&[len, dim], data)
}

/// Positions `0..len` repeated for each of `batch` sequences.
pub(crate) fn tiled_pe(batch: usize, len: usize, dim: usize) -> Result<Tensor> {
    let pe = sinusoidal_pe(len, dim)?;
    Tensor::new(&[batch * len, dim], pe.data().repeat(batch))
}

/// Shapes of one decoder block's parameters, under `prefix`.
pub(crate) fn block_shapes(prefix: &str, d: usize, ff_mult: usize) -> Vec<(String, Vec<usize>)> {
    let h = ff_mult * d;
    let mut v = vec![
        (format!("{prefix}.ln1.gain"), vec![d]),
        (format!("{prefix}.ln1.bias"), vec![d]),
    ];
    for w in ["q", "k", "v", "o"] {
        v.push((format!("{prefix}.attn.w{w}"), vec![d, d]));
        v.push((format!("{prefix}.attn.b{w}"), vec![d]));
    }
    v.extend([
        (format!("{prefix}.ln2.gain"), vec![d]),
        (format!("{prefix}.ln2.bias"), vec![d]),
        (format!("{prefix}.ff.w1"), vec![d, h]),
        (format!("{prefix}.ff.b1"), vec![h]),
        (format!("{prefix}.ff.w2"), vec![h, d]),
        (format!("{prefix}.ff.b2"), vec![d]),
    ]);
    v
}

/// `layers` blocks `{prefix}.layer{i}` plus the final `{prefix}.ln_f`.
pub(crate) fn stack_shapes(prefix: &str, layers: usize, d: usize, ff_mult: usize) -> Vec<(String, Vec<usize>)> {
    let mut v: Vec<_> = (0..layers)
        .flat_map(|i| block_shapes(&format!("{prefix}.layer{i}"), d, ff_mult))
        .collect();
    v.push((format!("{prefix}.ln_f.gain"), vec![d]));
    v.push((format!("{prefix}.ln_f.bias"), vec![d]));
    v
}

/// `x · W + b` for `x[N×in]`.
pub(crate) fn linear(g: &mut Graph, ps: &ParameterSet, x: Var, w: &str, b: &str) -> Result<Var> {
    let w = g.param(ps, w)?;
    let b = g.param(ps, b)?;
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

pub(crate) fn layer_norm(g: &mut Graph, ps: &ParameterSet, x: Var, prefix: &str) -> Result<Var> {
    let gain = g.param(ps, &format!("{prefix}.gain"))?;
    let bias = g.param(ps, &format!("{prefix}.bias"))?;
    g.layer_norm(x, gain, bias, LN_EPS)
}

/// Inverted dropout on residual branches, for training only.
pub struct Dropout {
    pub p: f64,
    pub rng: Rng,
}

impl Dropout {
    fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        if self.p <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.p;
        let shape = g.shape(x).to_vec();
        let n = shape.iter().product();
        let mask = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = g.input(Tensor::new(&shape, mask)?);
        g.mul(x, mask)
    }
}

/// Geometry of a flattened `[batch * len, dim]` activation.
#[derive(Clone, Copy, Debug)]
pub struct SeqShape {
    pub batch: usize,
    pub len: usize,
}

/// Causal multi-head self-attention on `x[B·T × d]`.
fn self_attention(g: &mut Graph, ps: &ParameterSet, x: Var, prefix: &str, s: SeqShape, heads: usize) -> Result<Var> {
    let d = g.shape(x)[1];
    let dh = d / heads;
    let (b, t) = (s.batch, s.len);
    let split = |g: &mut Graph, w: &str| -> Result<Var> {
        let y = linear(g, ps, x, &format!("{prefix}.w{w}"), &format!("{prefix}.b{w}"))?;
        let y = g.reshape(y, &[b, t, heads, dh])?;
        let y = g.permute(y, &[0, 2, 1, 3])?;
        g.reshape(y, &[b * heads, t, dh])
    };
    let q = split(g, "q")?;
    let k = split(g, "k")?;
    let v = split(g, "v")?;
    let scores = g.batch_matmul(q, k, true)?;
    let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
    let attn = g.causal_softmax(scores)?;
    let out = g.batch_matmul(attn, v, false)?;
    let out = g.reshape(out, &[b, heads, t, dh])?;
    let out = g.permute(out, &[0, 2, 1, 3])?;
    let out = g.reshape(out, &[b * t, d])?;
    linear(g, ps, out, &format!("{prefix}.wo"), &format!("{prefix}.bo"))
}

/// Pre-norm causal decoder stack: per block `x + Attn(LN(x))` then
/// `x + FF(LN(x))` with `FF = Linear(d, 4d) → GELU → Linear(4d, d)`,
/// followed by a final layer norm. Position `t` attends to positions `<= t`
/// of its own sequence.
pub fn decoder_stack(
    g: &mut Graph,
    ps: &ParameterSet,
    prefix: &str,
    x: Var,
    shape: SeqShape,
    layers: usize,
    heads: usize,
    mut dropout: Option<&mut Dropout>,
) -> Result<Var> {
    let d = g.shape(x)[1];
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    if g.shape(x)[0] != shape.batch * shape.len {
        return Err(Error::shape("decoder_stack", g.shape(x), &[shape.batch, shape.len]));
    }
    let mut x = x;
    for i in 0..layers {
        let p = format!("{prefix}.layer{i}");
        let h = layer_norm(g, ps, x, &format!("{p}.ln1"))?;
        let mut a = self_attention(g, ps, h, &format!("{p}.attn"), shape, heads)?;
        if let Some(d) = dropout.as_deref_mut() {
            a = d.apply(g, a)?;
        }
        x = g.add(x, a)?;
        let h = layer_norm(g, ps, x, &format!("{p}.ln2"))?;
        let h = linear(g, ps, h, &format!("{p}.ff.w1"), &format!("{p}.ff.b1"))?;
        let h = g.gelu(h);
        let mut h = linear(g, ps, h, &format!("{p}.ff.w2"), &format!("{p}.ff.b2"))?;
        if let Some(d) = dropout.as_deref_mut() {
            h = d.apply(g, h)?;
        }
        x = g.add(x, h)?;
    }
    layer_norm(g, ps, x, &format!("{prefix}.ln_f"))
}
