//! Coarse acoustic tokens at 75 Hz and their alignment with mel frames.
//!
//! Tokens come either from external codec-token files (`WGT1`) or from the
//! built-in k-means quantizer over mel frames, which stands in for a neural
//! codec's coarse quantizer.

mod vq;

pub use vq::{encode_vq, nearest_centroid, train_vq, train_vq_traced, VqCodebook, VqOptions};

use crate::audio::MelFrameSequence;
use crate::error::{Error, Result};

pub const VOCAB: usize = 1024;
pub const TOKEN_RATE: u32 = 75;
/// Largest length difference [`align`] absorbs by truncation.
pub const MAX_ALIGN_GAP: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenSource {
    External,
    Vq,
}

/// Non-empty sequence of token ids below `vocab`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<usize>,
    vocab: usize,
    source: TokenSource,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, vocab: usize, source: TokenSource) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Contract("token sequence must be non-empty".into()));
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::Vocabulary { id, vocab });
        }
        Ok(TokenSequence { ids, vocab, source })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn source(&self) -> TokenSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids `start..end`; the range must be non-empty.
    pub fn slice(&self, start: usize, end: usize) -> TokenSequence {
        assert!(start < end && end <= self.ids.len());
        TokenSequence {
            ids: self.ids[start..end].to_vec(),
            vocab: self.vocab,
            source: self.source,
        }
    }
}

/// One utterance: its tokens and (for the hybrid model) the mel frame for
/// each token.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedExample {
    pub tokens: TokenSequence,
    pub frames: Option<MelFrameSequence>,
    pub utterance_id: String,
}

impl AlignedExample {
    pub fn token_only(tokens: TokenSequence, utterance_id: impl Into<String>) -> Self {
        AlignedExample {
            tokens,
            frames: None,
            utterance_id: utterance_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Positions `start..end` of tokens and frames together.
    pub fn crop(&self, start: usize, end: usize) -> AlignedExample {
        AlignedExample {
            tokens: self.tokens.slice(start, end),
            frames: self.frames.as_ref().map(|f| f.slice(start, end)),
            utterance_id: self.utterance_id.clone(),
        }
    }
}

/// Pairs tokens with frames, truncating both to the shorter length when they
/// differ by at most two positions.
pub fn align(
    tokens: TokenSequence,
    frames: MelFrameSequence,
    utterance_id: impl Into<String>,
) -> Result<AlignedExample> {
    let (nt, nf) = (tokens.len(), frames.n_frames());
    if nt.abs_diff(nf) > MAX_ALIGN_GAP {
        return Err(Error::Misaligned { tokens: nt, frames: nf });
    }
    let n = nt.min(nf);
    if n == 0 {
        return Err(Error::Misaligned { tokens: nt, frames: nf });
    }
    let tokens = if nt > n { tokens.slice(0, n) } else { tokens };
    let frames = if nf > n { frames.slice(0, n) } else { frames };
    Ok(AlignedExample {
        tokens,
        frames: Some(frames),
        utterance_id: utterance_id.into(),
    })
}
