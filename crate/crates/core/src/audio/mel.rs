//! Causal log-mel frames at 75 Hz from 24 kHz audio.
//!
//! Frame `t` (1-based) is the Hann-windowed 960-sample block ending at
//! sample `t * 320` (1-based, inclusive), left-padded with zeros near the
//! start. There is no lookahead: the frame never touches later samples.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::{AudioBuffer, FrameScale, MelFrameSequence};
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 24_000;
pub const HOP: usize = 320;
pub const WINDOW: usize = 960;
pub const N_FFT: usize = 1024;
pub const N_MELS: usize = 64;
pub const FRAME_RATE: u32 = 75;
pub const LOG_FLOOR: f64 = 1e-10;
pub const F_MAX: f64 = 12_000.0;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters spanning 0 to 12 kHz, unit peak.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// `[N_MELS][N_FFT / 2 + 1]` weights.
    weights: Vec<Vec<f64>>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new() -> Self {
        let n_bins = N_FFT / 2 + 1;
        let top = hz_to_mel(F_MAX);
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(top * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / N_FFT as f64;
        let weights = (0..N_MELS)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= c {
                            (f - lo) / (c - lo)
                        } else {
                            (hi - f) / (hi - c)
                        }
                    })
                    .collect()
            })
            .collect();
        MelFilterbank {
            weights,
            centers: edges[1..=N_MELS].to_vec(),
        }
    }

    /// Peak frequency of each filter, in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weights(&self, mel: usize) -> &[f64] {
        &self.weights[mel]
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = w.iter().zip(power).map(|(a, b)| a * b).sum();
        }
    }
}

impl Default for MelFilterbank {
    fn default() -> Self {
        Self::new()
    }
}

/// Reusable analysis state (window, FFT plan, filterbank).
pub struct MelExtractor {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filters: MelFilterbank,
}

impl MelExtractor {
    pub fn new() -> Self {
        // periodic Hann
        let window = (0..WINDOW)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW as f64).cos())
            .collect();
        MelExtractor {
            window,
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
            filters: MelFilterbank::new(),
        }
    }

    pub fn filters(&self) -> &MelFilterbank {
        &self.filters
    }

    pub fn extract(&self, buf: &AudioBuffer) -> Result<MelFrameSequence> {
        if buf.sample_rate != SAMPLE_RATE {
            return Err(Error::Contract(format!(
                "log-mel analysis needs {SAMPLE_RATE} Hz audio, got {} Hz (resample first)",
                buf.sample_rate
            )));
        }
        let n_frames = buf.samples.len() / HOP;
        let mut frames = Vec::with_capacity(n_frames * N_MELS);
        let mut spectrum = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; N_FFT / 2 + 1];
        let mut mel = vec![0.0; N_MELS];
        for t in 1..=n_frames {
            let end = t * HOP; // exclusive, 0-based
            spectrum.fill(Complex::new(0.0, 0.0));
            for (n, w) in self.window.iter().enumerate() {
                let idx = end as isize - WINDOW as isize + n as isize;
                if idx >= 0 {
                    spectrum[n].re = buf.samples[idx as usize] * w;
                }
            }
            self.fft.process_with_scratch(&mut spectrum, &mut scratch);
            for (p, c) in power.iter_mut().zip(&spectrum) {
                *p = c.norm_sqr();
            }
            self.filters.apply(&power, &mut mel);
            frames.extend(mel.iter().map(|&e| e.max(LOG_FLOOR).ln()));
        }
        Ok(MelFrameSequence {
            frames,
            n_bins: N_MELS,
            scale: FrameScale::Raw,
        })
    }
}

impl Default for MelExtractor {
    fn default() -> Self {
        Self::new()
    }
}

/// Raw causal log-mel frames of 24 kHz audio; `floor(n / 320)` frames.
pub fn causal_log_mel(buf: &AudioBuffer) -> Result<MelFrameSequence> {
    MelExtractor::new().extract(buf)
}
