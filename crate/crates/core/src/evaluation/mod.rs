//! Teacher-forced metrics, autoregressive sampling and model comparison.

mod ablation;
mod probes;
mod sampler;

pub use ablation::{ablation_compare, AblationReport, AblationRun, ModelSummary};
pub use probes::{mel_probe, slice_probe, token_probe, Probe};
pub use sampler::{draw, sample, top_k_distribution, SamplerConfig};

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::{ParameterSet, Tensor};
use crate::tokenizer::AlignedExample;

/// Next-token metrics in nats. `ppl` is always `exp(nll)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    nll: f64,
    ppl: f64,
    accuracy: f64,
    n_tokens: usize,
}

impl Metrics {
    pub fn new(nll: f64, accuracy: f64, n_tokens: usize) -> Result<Self> {
        if !nll.is_finite() {
            return Err(Error::NonFinite(format!("nll = {nll}")));
        }
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::Contract(format!("accuracy {accuracy} outside [0, 1]")));
        }
        let ppl = nll.exp();
        debug_assert!((ppl.ln() - nll).abs() <= 1e-9 * nll.abs().max(1.0));
        Ok(Metrics {
            nll,
            ppl,
            accuracy,
            n_tokens,
        })
    }

    pub fn nll(&self) -> f64 {
        self.nll
    }

    pub fn ppl(&self) -> f64 {
        self.ppl
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "nll {:.4}  acc {:.2}%  ppl {:.3}  ({} tokens)",
            self.nll,
            100.0 * self.accuracy,
            self.ppl,
            self.n_tokens
        )
    }
}

/// Running sums behind [`Metrics`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSums {
    pub nll: f64,
    pub correct: usize,
    pub count: usize,
}

impl MetricSums {
    /// Scores one logits row against its target.
    pub fn push(&mut self, row: &[f64], target: usize) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        self.nll += lse - row[target];
        self.correct += usize::from(argmax(row) == target);
        self.count += 1;
    }

    /// Scores every row of `logits[N×V]` against `targets`.
    pub fn push_rows(&mut self, logits: &Tensor, targets: &[usize]) {
        let v = logits.last_dim();
        for (row, &t) in logits.data().chunks(v).zip(targets) {
            self.push(row, t);
        }
    }

    pub fn merge(&mut self, other: &MetricSums) {
        self.nll += other.nll;
        self.correct += other.correct;
        self.count += other.count;
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.count == 0 {
            return Err(Error::EmptyCorpus("no positions were scored".into()));
        }
        Metrics::new(
            self.nll / self.count as f64,
            self.correct as f64 / self.count as f64,
            self.count,
        )
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Teacher-forced sums over the targets `ids[j]` with `j >= from`.
///
/// Sequences longer than the context are scored in consecutive windows of
/// `context + 1` tokens that overlap by one, so every target is scored once.
pub fn score_example(model: &Model, ps: &ParameterSet, ex: &AlignedExample, from: usize) -> Result<MetricSums> {
    let n = ex.len();
    let ctx = model.config().context;
    let from = from.max(1);
    let mut sums = MetricSums::default();
    let mut start = 0;
    while start + 1 < n {
        let end = (start + ctx + 1).min(n);
        if end > from {
            let logits = model.logits(ps, &ex.crop(start, end - 1))?;
            let ids = ex.tokens.ids();
            let v = logits.last_dim();
            for j in (start + 1).max(from)..end {
                sums.push(&logits.data()[(j - start - 1) * v..(j - start) * v], ids[j]);
            }
        }
        start = end - 1;
    }
    Ok(sums)
}

/// Token-weighted metrics over a split, teacher-forced on each full sequence.
///
/// Examples are scored in parallel and reduced in input order.
pub fn evaluate(model: &Model, ps: &ParameterSet, split: &[AlignedExample]) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::EmptyCorpus("evaluation split is empty".into()));
    }
    let parts: Vec<Result<MetricSums>> = split.par_iter().map(|ex| score_example(model, ps, ex, 1)).collect();
    let mut total = MetricSums::default();
    for p in parts {
        total.merge(&p?);
    }
    total.finish()
}

/// Metrics over the continuation `ids[prompt_len..]` of one example, with
/// ground-truth tokens (and frames) as context throughout.
pub fn hybrid_continuation_eval(
    model: &Model,
    ps: &ParameterSet,
    ex: &AlignedExample,
    prompt_len: usize,
) -> Result<Metrics> {
    if prompt_len >= ex.len() {
        return Err(Error::Contract(format!(
            "prompt length {prompt_len} leaves nothing to score in {} tokens",
            ex.len()
        )));
    }
    score_example(model, ps, ex, prompt_len)?.finish()
}
