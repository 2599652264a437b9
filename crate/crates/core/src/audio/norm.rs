//! Corpus-level per-bin normalization of log-mel frames.

use crate::audio::{FrameScale, MelFrameSequence};
use crate::error::{Error, Result};

/// Lower bound on a bin's standard deviation.
pub const STD_FLOOR: f64 = 1e-5;

/// Per-bin mean and standard deviation of a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub corpus_id: String,
}

impl NormalizationStats {
    /// Mean 0, std 1: applying it changes nothing.
    pub fn identity(n_bins: usize) -> Self {
        NormalizationStats {
            mean: vec![0.0; n_bins],
            std: vec![1.0; n_bins],
            corpus_id: "identity".into(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.mean.len()
    }
}

/// Streaming per-bin mean/variance (Welford), mergeable across workers.
#[derive(Clone, Debug)]
pub struct Welford {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(n_bins: usize) -> Self {
        Welford {
            count: 0,
            mean: vec![0.0; n_bins],
            m2: vec![0.0; n_bins],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, frame: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(frame) {
            let d = x - *m;
            *m += d / n;
            *s += d * (x - *m);
        }
    }

    /// Combines two partial states (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn finish(&self, corpus_id: impl Into<String>) -> Result<NormalizationStats> {
        if self.count < 2 {
            return Err(Error::EmptyCorpus(format!(
                "normalization needs at least 2 frames, got {}",
                self.count
            )));
        }
        let n = self.count as f64;
        Ok(NormalizationStats {
            mean: self.mean.clone(),
            std: self.m2.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect(),
            corpus_id: corpus_id.into(),
        })
    }
}

/// Per-bin mean and population standard deviation over every frame of
/// every sequence.
pub fn fit_normalization<'a, I>(corpus: I, corpus_id: &str) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = &'a MelFrameSequence>,
{
    let mut acc: Option<Welford> = None;
    for seq in corpus {
        let w = acc.get_or_insert_with(|| Welford::new(seq.n_bins));
        if seq.n_bins != w.mean.len() {
            return Err(Error::shape("fit_normalization", &[w.mean.len()], &[seq.n_bins]));
        }
        for t in 0..seq.n_frames() {
            w.push(seq.frame(t));
        }
    }
    acc.ok_or_else(|| Error::EmptyCorpus("no sequences".into()))?
        .finish(corpus_id)
}

/// `(x - mean) / std` per bin. Only raw frames may be normalized.
pub fn apply_normalization(seq: &MelFrameSequence, stats: &NormalizationStats) -> Result<MelFrameSequence> {
    if seq.scale != FrameScale::Raw {
        return Err(Error::Contract("frames are already normalized".into()));
    }
    if seq.n_bins != stats.n_bins() {
        return Err(Error::shape("apply_normalization", &[seq.n_bins], &[stats.n_bins()]));
    }
    let d = seq.n_bins;
    let frames = seq
        .frames
        .chunks_exact(d)
        .flat_map(|row| {
            row.iter()
                .zip(&stats.mean)
                .zip(&stats.std)
                .map(|((x, m), s)| (x - m) / s)
        })
        .collect();
    Ok(MelFrameSequence {
        frames,
        n_bins: d,
        scale: FrameScale::Normalized {
            corpus_id: stats.corpus_id.clone(),
        },
    })
}
