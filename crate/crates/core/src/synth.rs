//! Synthetic corpora for desk-scale experiments.
//!
//! * `memorize`: random 750-token sequences of distinct ids, so a small
//!   model can drive the training loss to zero.
//! * `hybrid-advantage`: token sequences whose next step depends on a
//!   continuous attribute visible only in the spectrogram. The latent state
//!   `k_t` (the token) advances by `1 + u_{t-1}` where `u_t ∈ {0..3}` is
//!   drawn iid and encoded solely as a loudness offset of frame `t`. A
//!   token-only model cannot do better than `ln 4` nats per token; a model
//!   that sees frames up to `t - 1` can predict `k_{t+1}` exactly.
//! * `smoke-wav`: six 10-second 24 kHz waveforms (one stored at 48 kHz)
//!   for exercising the audio pipeline end to end.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::audio::{
    apply_normalization, fit_normalization, AudioBuffer, FrameScale, MelFrameSequence, NormalizationStats,
};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SliceBranchConfig, Variant};
use crate::rng::{indexed_stream, streams};
use crate::tokenizer::{AlignedExample, TokenSequence, TokenSource, VOCAB};
use crate::training::TrainConfig;

pub const MEMORIZE_LEN: usize = 750;
pub const ADVANTAGE_VOCAB: usize = 64;
pub const ADVANTAGE_LEN: usize = 96;
pub const ADVANTAGE_MELS: usize = 64;
/// Number of distinct step sizes hidden in the frames.
pub const ADVANTAGE_BRANCHES: usize = 4;

/// Synthetic profiles selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Memorize,
    HybridAdvantage,
    SmokeWav,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memorize" => Ok(Profile::Memorize),
            "hybrid-advantage" => Ok(Profile::HybridAdvantage),
            "smoke-wav" => Ok(Profile::SmokeWav),
            _ => Err(Error::Config(format!(
                "unknown profile {s:?}; expected memorize, hybrid-advantage or smoke-wav"
            ))),
        }
    }
}

/// `n` token-only sequences of 750 distinct ids each.
pub fn memorize(n: usize, seed: u64) -> Result<Vec<AlignedExample>> {
    let mut all: Vec<usize> = (0..VOCAB).collect();
    (0..n)
        .map(|i| {
            let mut rng = indexed_stream(seed, streams::SYNTH, i as u64);
            all.shuffle(&mut rng);
            let seq = TokenSequence::new(all[..MEMORIZE_LEN].to_vec(), VOCAB, TokenSource::External)?;
            Ok(AlignedExample::token_only(seq, format!("mem-{i:04}")))
        })
        .collect()
}

/// Shrunk GPT_S and an aggressive schedule for memorizing one sequence;
/// every epoch is a single step, so `epochs` bounds the step count.
pub fn memorize_setup(seed: u64) -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        main_layers: 2,
        main_dim: 32,
        main_heads: 4,
        head_hidden: 256,
        ..ModelConfig::gpt_s()
    };
    let train = TrainConfig {
        epochs: 2000,
        crop_len: MEMORIZE_LEN,
        batch_size: 1,
        lr_initial: 3e-3,
        lr_decayed: 3e-3,
        decay_after_epoch: 2000,
        seed,
        val_percent: 0,
        target_loss: Some(0.05),
        checkpoint_every: 100,
        ..TrainConfig::default()
    };
    (model, train)
}

/// `n` aligned examples of the hybrid-advantage profile with normalized
/// frames, plus the statistics used to normalize them.
pub fn hybrid_advantage(n: usize, seed: u64) -> Result<(Vec<AlignedExample>, NormalizationStats)> {
    let noise = Normal::new(0.0, 0.3).expect("valid std");
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = indexed_stream(seed, streams::SYNTH, i as u64);
        let u: Vec<usize> = (0..ADVANTAGE_LEN)
            .map(|_| rng.gen_range(0..ADVANTAGE_BRANCHES))
            .collect();
        let mut k = vec![rng.gen_range(0..ADVANTAGE_VOCAB)];
        let first_step = 1 + rng.gen_range(0..ADVANTAGE_BRANCHES);
        k.push((k[0] + first_step) % ADVANTAGE_VOCAB);
        for t in 1..ADVANTAGE_LEN - 1 {
            k.push((k[t] + 1 + u[t - 1]) % ADVANTAGE_VOCAB);
        }
        let mut frames = Vec::with_capacity(ADVANTAGE_LEN * ADVANTAGE_MELS);
        for t in 0..ADVANTAGE_LEN {
            let centre = (k[t] * ADVANTAGE_MELS / ADVANTAGE_VOCAB) as f64;
            let level = u[t] as f64;
            for b in 0..ADVANTAGE_MELS {
                let d = b as f64 - centre;
                frames.push(-6.0 + 3.0 * (-0.5 * (d / 1.5).powi(2)).exp() + level + noise.sample(&mut rng));
            }
        }
        let seq = MelFrameSequence {
            frames,
            n_bins: ADVANTAGE_MELS,
            scale: FrameScale::Raw,
        };
        let tokens = TokenSequence::new(k, ADVANTAGE_VOCAB, TokenSource::External)?;
        raw.push((format!("adv-{i:04}"), tokens, seq));
    }
    let corpus_id = format!("hybrid-advantage-{seed}");
    let stats = fit_normalization(raw.iter().map(|r| &r.2), &corpus_id)?;
    let examples = raw
        .into_iter()
        .map(|(id, tokens, seq)| {
            Ok(AlignedExample {
                tokens,
                frames: Some(apply_normalization(&seq, &stats)?),
                utterance_id: id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((examples, stats))
}

/// A shrunk HYBRID and the token-only GPT_S with the same main stack, plus
/// a training recipe sized for the hybrid-advantage corpus.
pub fn hybrid_advantage_setup(seed: u64) -> (ModelConfig, ModelConfig, TrainConfig) {
    let gpt_s = ModelConfig {
        variant: Variant::GptS,
        vocab: ADVANTAGE_VOCAB,
        context: ADVANTAGE_LEN,
        main_layers: 2,
        main_dim: 32,
        main_heads: 4,
        ff_mult: 4,
        head_hidden: 256,
        slice: None,
    };
    let hybrid = ModelConfig {
        variant: Variant::Hybrid,
        slice: Some(SliceBranchConfig {
            layers: 2,
            dim: 16,
            heads: 2,
            proj_hidden: 64,
            n_mels: ADVANTAGE_MELS,
            spec_shift: 2,
        }),
        ..gpt_s.clone()
    };
    let train = TrainConfig {
        epochs: 12,
        crop_len: ADVANTAGE_LEN,
        batch_size: 8,
        lr_initial: 2e-3,
        lr_decayed: 1e-3,
        decay_after_epoch: 8,
        seed,
        val_percent: 20,
        ..TrainConfig::default()
    };
    (hybrid, gpt_s, train)
}

/// Six deterministic 10-second clips: harmonic tones with vibrato, a chirp,
/// noise bursts and silence. The last clip is stored at 48 kHz.
pub fn smoke_wavs(seed: u64) -> Vec<(String, AudioBuffer)> {
    const SECONDS: usize = 10;
    (0..6)
        .map(|i| {
            let rate: u32 = if i == 5 { 48_000 } else { 24_000 };
            let n = SECONDS * rate as usize;
            let sr = rate as f64;
            let mut rng = indexed_stream(seed, streams::SYNTH, i as u64);
            let base = 110.0 * 2f64.powf(rng.gen_range(0.0..3.0));
            let noise = Normal::new(0.0, 0.05).expect("valid std");
            let mut phase = 0.0;
            let samples = (0..n)
                .map(|j| {
                    let t = j as f64 / sr;
                    let f = match i % 3 {
                        0 => base * (1.0 + 0.01 * (2.0 * PI * 5.0 * t).sin()),
                        1 => base * (1.0 + t / SECONDS as f64),
                        _ => base * if (t * 2.0) as usize % 2 == 0 { 1.0 } else { 1.5 },
                    };
                    phase += 2.0 * PI * f / sr;
                    let gate = if (t * 4.0).fract() < 0.8 { 1.0 } else { 0.0 };
                    let tone: f64 = (1..=4).map(|h| (h as f64 * phase).sin() / h as f64).sum();
                    let burst = if (t * 1.5).fract() < 0.1 {
                        noise.sample(&mut rng) * 4.0
                    } else {
                        0.0
                    };
                    (0.25 * gate * tone + burst + noise.sample(&mut rng) * 0.1).clamp(-1.0, 1.0)
                })
                .collect();
            (
                format!("smoke-{i:02}"),
                AudioBuffer {
                    samples,
                    sample_rate: rate,
                },
            )
        })
        .collect()
}
