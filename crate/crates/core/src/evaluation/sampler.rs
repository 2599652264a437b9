use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Variant};
use crate::numcore::ParameterSet;
use crate::rng::{self, streams, Rng};
use crate::tokenizer::{AlignedExample, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 1.0,
            top_k: 1024,
            max_new_tokens: 750,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, vocab: usize) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.top_k == 0 || self.top_k > vocab {
            return Err(Error::Config(format!(
                "top_k must be in [1, {vocab}], got {}",
                self.top_k
            )));
        }
        Ok(())
    }
}

/// Probabilities of `softmax(logits / temperature)` restricted to the `top_k`
/// largest logits (ties to the lowest id) and renormalized.
pub fn top_k_distribution(logits: &[f64], temperature: f64, top_k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let kept = &order[..top_k.clamp(1, logits.len())];
    let max = logits[kept[0]] / temperature;
    let mut probs = vec![0.0; logits.len()];
    let mut z = 0.0;
    for &i in kept {
        let e = (logits[i] / temperature - max).exp();
        probs[i] = e;
        z += e;
    }
    probs.iter_mut().for_each(|p| *p /= z);
    probs
}

/// Categorical draw by inverting the cumulative distribution in id order.
pub fn draw(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Extends `prompt` autoregressively until `max_new_tokens` are added or the
/// context is full. Token-only variants only.
pub fn sample(model: &Model, ps: &ParameterSet, prompt: &TokenSequence, sc: &SamplerConfig) -> Result<TokenSequence> {
    let cfg = model.config();
    if model.variant() == Variant::Hybrid {
        return Err(Error::Unsupported(
            "free-running generation with HYBRID needs the spectrogram of audio that does not exist yet; \
             use teacher-forced or ground-truth continuation evaluation instead"
                .into(),
        ));
    }
    sc.validate(cfg.vocab)?;
    if prompt.len() > cfg.context {
        return Err(Error::Context {
            len: prompt.len(),
            max: cfg.context,
        });
    }
    let mut rng = rng::stream(sc.seed, streams::SAMPLE);
    let mut ids = prompt.ids().to_vec();
    for _ in 0..sc.max_new_tokens {
        if ids.len() >= cfg.context {
            break;
        }
        let seq = TokenSequence::new(ids.clone(), cfg.vocab, prompt.source())?;
        let logits = model.logits(ps, &AlignedExample::token_only(seq, "prompt"))?;
        let v = logits.last_dim();
        let last = &logits.data()[(ids.len() - 1) * v..];
        let probs = top_k_distribution(last, sc.temperature, sc.top_k);
        ids.push(draw(&probs, &mut rng));
    }
    TokenSequence::new(ids, cfg.vocab, prompt.source())
}
