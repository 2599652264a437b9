//! The three architectures: token-only GPT_S and GPT_L, and the hybrid
//! model that fuses a causal spectrogram branch with the token stream.
//!
//! All variants map a batch of equal-length inputs to logits of shape
//! `[batch · len, vocab]`; row `t` of each sequence is the prediction for
//! token `t + 1`.
//!
//! The hybrid spectrogram branch sees its frames shifted right by one
//! position behind a learned pad frame. Row `t` therefore depends on tokens
//! `<= t` but only on frames `<= t - 1`, i.e. the two most recent frames
//! relative to the predicted token `t + 1` are withheld.

pub mod checkpoint;
mod config;
mod layers;

use std::fmt;

pub use config::{ModelConfig, SliceBranchConfig, Variant};
pub use layers::{decoder_stack, sinusoidal_pe, Dropout, SeqShape, LN_EPS};

use crate::error::{Error, Result};
use crate::numcore::{Graph, ParameterSet, Tensor, Var};
use crate::rng::{self, streams};
use crate::tokenizer::AlignedExample;
use layers::{linear, stack_shapes, tiled_pe};

const INIT_STD: f64 = 0.02;
const EMBED_STD: f64 = 1.0;

/// Equal-length inputs for one forward pass, flattened row-major.
#[derive(Clone, Debug)]
pub struct Batch {
    pub tokens: Vec<usize>,
    /// `batch · len · n_mels` frames, present when every example had them.
    pub frames: Option<Vec<f64>>,
    pub frames_normalized: bool,
    pub n_mels: usize,
    pub batch: usize,
    pub len: usize,
}

impl Batch {
    pub fn from_examples(examples: &[&AlignedExample]) -> Result<Batch> {
        let first = examples.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
        let len = first.len();
        let mut tokens = Vec::with_capacity(examples.len() * len);
        let with_frames = examples.iter().all(|e| e.frames.is_some());
        let n_mels = first.frames.as_ref().map_or(0, |f| f.n_bins);
        let mut frames = with_frames.then(|| Vec::with_capacity(examples.len() * len * n_mels));
        let mut normalized = true;
        for ex in examples {
            if ex.len() != len {
                return Err(Error::shape("batch", &[len], &[ex.len()]));
            }
            tokens.extend_from_slice(ex.tokens.ids());
            if let (Some(out), Some(f)) = (frames.as_mut(), ex.frames.as_ref()) {
                if f.n_bins != n_mels || f.n_frames() != len {
                    return Err(Error::Misaligned {
                        tokens: len,
                        frames: f.n_frames(),
                    });
                }
                normalized &= f.is_normalized();
                out.extend_from_slice(&f.frames);
            }
        }
        Ok(Batch {
            tokens,
            frames,
            frames_normalized: normalized,
            n_mels,
            batch: examples.len(),
            len,
        })
    }

    pub fn shape(&self) -> SeqShape {
        SeqShape {
            batch: self.batch,
            len: self.len,
        }
    }
}

/// Parameter count of one group of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub count: usize,
}

/// Exact parameter accounting of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub variant: Variant,
    pub total: usize,
    pub groups: Vec<ParamGroup>,
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} parameters", self.variant)?;
        for g in &self.groups {
            writeln!(f, "  {:<16} {:>12}", g.name, g.count)?;
        }
        writeln!(f, "  {:<16} {:>12}", "total", self.total)?;
        write!(
            f,
            "  {:<16} {:>12}  (reported, not asserted)",
            "reference",
            self.variant.reference_params()
        )
    }
}

fn group_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    if parts[0] == "head" || parts.len() < 2 {
        return parts[0].to_string();
    }
    let second = if parts[1].starts_with("layer") && parts[1][5..].chars().all(|c| c.is_ascii_digit()) {
        "layers"
    } else {
        parts[1]
    };
    format!("{}.{}", parts[0], second)
}

/// A validated architecture; parameters live in a separate [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Model { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Every parameter name and shape, in construction order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = &self.config;
        let mut v = vec![("embed.tokens".to_string(), vec![c.vocab, c.token_dim()])];
        if let Some(s) = &c.slice {
            v.push(("slice.pad".into(), vec![1, s.n_mels]));
            v.push(("slice.proj.w1".into(), vec![s.n_mels, s.proj_hidden]));
            v.push(("slice.proj.b1".into(), vec![s.proj_hidden]));
            v.push(("slice.proj.w2".into(), vec![s.proj_hidden, s.dim]));
            v.push(("slice.proj.b2".into(), vec![s.dim]));
            v.extend(stack_shapes("slice", s.layers, s.dim, c.ff_mult));
        }
        v.extend(stack_shapes("main", c.main_layers, c.main_dim, c.ff_mult));
        v.extend([
            ("head.w1".to_string(), vec![c.main_dim, c.head_hidden]),
            ("head.b1".to_string(), vec![c.head_hidden]),
            ("head.w2".to_string(), vec![c.head_hidden, c.vocab]),
            ("head.b2".to_string(), vec![c.vocab]),
        ]);
        v
    }

    pub fn count_parameters(&self) -> ParamReport {
        let mut groups: Vec<ParamGroup> = Vec::new();
        for (name, shape) in self.param_shapes() {
            let n: usize = shape.iter().product();
            let key = group_of(&name);
            match groups.iter_mut().find(|g| g.name == key) {
                Some(g) => g.count += n,
                None => groups.push(ParamGroup { name: key, count: n }),
            }
        }
        ParamReport {
            variant: self.config.variant,
            total: groups.iter().map(|g| g.count).sum(),
            groups,
        }
    }

    /// Fresh parameters: N(0, 0.02) weights (residual output projections
    /// scaled by `1/sqrt(2·layers)`), unit-variance token embeddings, zero
    /// biases and pad frame, unit layer-norm gains.
    pub fn init_params(&self, seed: u64) -> Result<ParameterSet> {
        let mut rng = rng::stream(seed, streams::INIT);
        let mut ps = ParameterSet::new();
        let main_scale = 1.0 / (2.0 * self.config.main_layers as f64).sqrt();
        let slice_scale = self
            .config
            .slice
            .as_ref()
            .map_or(1.0, |s| 1.0 / (2.0 * s.layers as f64).sqrt());
        for (name, shape) in self.param_shapes() {
            let leaf = name.rsplit('.').next().unwrap();
            let t = if name.ends_with(".gain") {
                Tensor::full(&shape, 1.0)
            } else if leaf.starts_with('b') || name == "slice.pad" {
                Tensor::zeros(&shape)
            } else if name == "embed.tokens" {
                Tensor::randn(&shape, EMBED_STD, &mut rng)
            } else if leaf == "wo" || name.ends_with("ff.w2") {
                let scale = if name.starts_with("slice.") {
                    slice_scale
                } else {
                    main_scale
                };
                Tensor::randn(&shape, INIT_STD * scale, &mut rng)
            } else {
                Tensor::randn(&shape, INIT_STD, &mut rng)
            };
            ps.insert(name, t)?;
        }
        Ok(ps)
    }

    /// Records the forward pass and returns logits `[batch · len, vocab]`.
    pub fn forward(&self, g: &mut Graph, ps: &ParameterSet, batch: &Batch) -> Result<Var> {
        self.forward_with(g, ps, batch, None)
    }

    /// [`Model::forward`] with optional residual dropout.
    pub fn forward_with(
        &self,
        g: &mut Graph,
        ps: &ParameterSet,
        batch: &Batch,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        let c = &self.config;
        if batch.len > c.context {
            return Err(Error::Context {
                len: batch.len,
                max: c.context,
            });
        }
        if let Some(&id) = batch.tokens.iter().find(|&&id| id >= c.vocab) {
            return Err(Error::Vocabulary { id, vocab: c.vocab });
        }
        let shape = batch.shape();
        let table = g.param(ps, "embed.tokens")?;
        let emb = g.embedding(table, &batch.tokens)?;
        let pe = g.input(tiled_pe(batch.batch, batch.len, c.token_dim())?);
        let tokens = g.add(emb, pe)?;
        let x = match &c.slice {
            None => tokens,
            Some(s) => {
                let slices = self.slice_branch(g, ps, batch, s, dropout.as_deref_mut())?;
                g.concat_last(&[tokens, slices])?
            }
        };
        let h = decoder_stack(g, ps, "main", x, shape, c.main_layers, c.main_heads, dropout)?;
        let h = linear(g, ps, h, "head.w1", "head.b1")?;
        let h = g.gelu(h);
        linear(g, ps, h, "head.w2", "head.b2")
    }

    fn slice_branch(
        &self,
        g: &mut Graph,
        ps: &ParameterSet,
        batch: &Batch,
        s: &SliceBranchConfig,
        dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        let frames = batch
            .frames
            .as_ref()
            .ok_or_else(|| Error::Contract("HYBRID needs mel frames for every example".into()))?;
        if !batch.frames_normalized {
            return Err(Error::Contract(
                "HYBRID needs normalized frames, got raw log-mel".into(),
            ));
        }
        if batch.n_mels != s.n_mels {
            return Err(Error::shape("slice_branch", &[batch.n_mels], &[s.n_mels]));
        }
        let (t, m) = (batch.len, s.n_mels);
        let pad = g.param(ps, "slice.pad")?;
        let mut parts = Vec::with_capacity(2 * batch.batch);
        for b in 0..batch.batch {
            parts.push(pad);
            if t > 1 {
                let start = b * t * m;
                let kept = Tensor::new(&[t - 1, m], frames[start..start + (t - 1) * m].to_vec())?;
                parts.push(g.input(kept));
            }
        }
        let shifted = g.concat_rows(&parts)?;
        let h = linear(g, ps, shifted, "slice.proj.w1", "slice.proj.b1")?;
        let h = g.gelu(h);
        let h = linear(g, ps, h, "slice.proj.w2", "slice.proj.b2")?;
        let pe = g.input(tiled_pe(batch.batch, t, s.dim)?);
        let h = g.add(h, pe)?;
        decoder_stack(g, ps, "slice", h, batch.shape(), s.layers, s.heads, dropout)
    }

    /// Logits `[len, vocab]` for one example.
    pub fn logits(&self, ps: &ParameterSet, example: &AlignedExample) -> Result<Tensor> {
        let batch = Batch::from_examples(&[example])?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, ps, &batch)?;
        Ok(g.value(out).clone())
    }
}
