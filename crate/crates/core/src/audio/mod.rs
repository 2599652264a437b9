//! Audio ingestion and causal log-mel features aligned with 75 Hz tokens.

mod mel;
mod norm;
mod resample;
mod wav;

pub use mel::{
    causal_log_mel, hz_to_mel, mel_to_hz, MelExtractor, MelFilterbank, FRAME_RATE, F_MAX, HOP, LOG_FLOOR, N_FFT,
    N_MELS, SAMPLE_RATE, WINDOW,
};
pub use norm::{apply_normalization, fit_normalization, NormalizationStats, Welford, STD_FLOOR};
pub use resample::{resample, MIN_SOURCE_RATE};
pub use wav::{encode_wav_pcm16, load_wav, parse_wav, write_wav_pcm16};

/// Mono PCM samples in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Whether frames are raw log-mel values or have been standardized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameScale {
    Raw,
    Normalized { corpus_id: String },
}

/// `n_frames × n_bins` log-mel frames at 75 Hz, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFrameSequence {
    pub frames: Vec<f64>,
    pub n_bins: usize,
    pub scale: FrameScale,
}

impl MelFrameSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.len() / self.n_bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t * self.n_bins..(t + 1) * self.n_bins]
    }

    /// Frames `start..end`, same scale.
    pub fn slice(&self, start: usize, end: usize) -> MelFrameSequence {
        MelFrameSequence {
            frames: self.frames[start * self.n_bins..end * self.n_bins].to_vec(),
            n_bins: self.n_bins,
            scale: self.scale.clone(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.scale, FrameScale::Normalized { .. })
    }
}
