//! Perturbation probes for causal structure.

use rand::Rng as _;

use crate::audio::{causal_log_mel, AudioBuffer, HOP};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::ParameterSet;
use crate::rng::Rng;
use crate::tokenizer::{AlignedExample, TokenSequence};

/// Outcome of perturbing one position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Probe {
    /// Every output that must not see the perturbation is bit-identical.
    pub prefix_unchanged: bool,
    /// At least one output allowed to see it changed.
    pub suffix_changed: bool,
}

impl Probe {
    pub fn holds(&self) -> bool {
        self.prefix_unchanged && self.suffix_changed
    }
}

fn rows_equal(a: &[f64], b: &[f64], width: usize, rows: std::ops::Range<usize>) -> bool {
    rows.clone()
        .all(|r| a[r * width..(r + 1) * width] == b[r * width..(r + 1) * width])
}

/// Replaces every sample from index `t · hop` on (the audio after frame
/// `t`, 1-based) with noise. Frames `1..=t` must be bit-identical and, when
/// it exists, frame `t + 1` must change.
pub fn mel_probe(buf: &AudioBuffer, t: usize, rng: &mut Rng) -> Result<Probe> {
    let cut = t * HOP;
    if cut > buf.samples.len() {
        return Err(Error::Index {
            what: "frame",
            index: t,
            bound: buf.samples.len() / HOP,
        });
    }
    let mut other = buf.clone();
    for s in &mut other.samples[cut..] {
        *s = rng.gen_range(-1.0..1.0);
    }
    let a = causal_log_mel(buf)?;
    let b = causal_log_mel(&other)?;
    let n = a.n_frames();
    Ok(Probe {
        prefix_unchanged: rows_equal(&a.frames, &b.frames, a.n_bins, 0..t),
        suffix_changed: t == n || !rows_equal(&a.frames, &b.frames, a.n_bins, t..t + 1),
    })
}

/// Changes token `j` (0-based). Logits rows `< j` must be bit-identical and
/// some row `>= j` must change.
pub fn token_probe(model: &Model, ps: &ParameterSet, ex: &AlignedExample, j: usize) -> Result<Probe> {
    let vocab = model.config().vocab;
    let mut ids = ex.tokens.ids().to_vec();
    ids[j] = (ids[j] + 1 + vocab / 2) % vocab;
    let other = AlignedExample {
        tokens: TokenSequence::new(ids, ex.tokens.vocab().max(vocab), ex.tokens.source())?,
        ..ex.clone()
    };
    let a = model.logits(ps, ex)?;
    let b = model.logits(ps, &other)?;
    let (n, v) = (ex.len(), vocab);
    Ok(Probe {
        prefix_unchanged: rows_equal(a.data(), b.data(), v, 0..j),
        suffix_changed: !rows_equal(a.data(), b.data(), v, j..n),
    })
}

/// Changes mel frame (slice) `j` (0-based). Logits rows `<= j` must be
/// bit-identical and some row `>= j + 1` must change; the final frame feeds
/// no row of the sequence, so for it only the first condition applies.
pub fn slice_probe(model: &Model, ps: &ParameterSet, ex: &AlignedExample, j: usize, rng: &mut Rng) -> Result<Probe> {
    let mut other = ex.clone();
    let frames = other
        .frames
        .as_mut()
        .ok_or_else(|| Error::Contract("slice probe needs frames".into()))?;
    let m = frames.n_bins;
    for x in &mut frames.frames[j * m..(j + 1) * m] {
        *x += rng.gen_range(0.5..2.0);
    }
    let a = model.logits(ps, ex)?;
    let b = model.logits(ps, &other)?;
    let (n, v) = (ex.len(), model.config().vocab);
    Ok(Probe {
        prefix_unchanged: rows_equal(a.data(), b.data(), v, 0..j + 1),
        suffix_changed: j + 1 == n || !rows_equal(a.data(), b.data(), v, j + 1..n),
    })
}
