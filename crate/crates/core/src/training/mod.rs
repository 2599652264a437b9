//! Pre-training loop: random fixed-length crops, next-token cross-entropy,
//! Adam with a two-stage learning rate, checkpoints and metric logs.

mod dataset;
mod records;
mod trainer;

pub use dataset::{load_dataset, parse_manifest, write_manifest, Dataset, ManifestEntry};
pub use records::{EvalRecord, StepRecord, TrainLog};
pub use trainer::{train, TrainOutcome, Trainer};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numcore::AdamConfig;
use crate::rng::{fnv1a64, Rng};
use crate::tokenizer::{AlignedExample, TokenSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub crop_len: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_decayed: f64,
    /// Last epoch (1-based) trained at `lr_initial`.
    pub decay_after_epoch: usize,
    pub seed: u64,
    /// Validate every this many steps, in addition to every epoch end.
    pub eval_every: Option<usize>,
    pub adam: AdamConfig,
    /// Global gradient-norm ceiling.
    pub grad_clip: Option<f64>,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_steps: Option<usize>,
    /// Stop once a training step's loss falls below this.
    pub target_loss: Option<f64>,
    /// Percentage of utterances held out for validation, chosen by id hash.
    pub val_percent: u64,
    /// Write `last.wgp1` every this many epochs (the final epoch always).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            crop_len: 750,
            batch_size: 8,
            lr_initial: 2e-4,
            lr_decayed: 1e-4,
            decay_after_epoch: 10,
            seed: 0,
            eval_every: None,
            adam: AdamConfig::default(),
            grad_clip: None,
            weight_decay: 0.0,
            dropout: 0.0,
            max_steps: None,
            target_loss: None,
            val_percent: 5,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return err("epochs, batch_size and checkpoint_every must be positive".into());
        }
        if self.crop_len < 2 || self.crop_len > model.context {
            return err(format!("crop_len {} must be in [2, {}]", self.crop_len, model.context));
        }
        if !(self.lr_initial > 0.0 && self.lr_decayed > 0.0) {
            return err("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        if self.weight_decay < 0.0 || self.grad_clip.is_some_and(|c| c <= 0.0) {
            return err("weight_decay must be >= 0 and grad_clip > 0".into());
        }
        if self.val_percent > 100 {
            return err(format!("val_percent {} exceeds 100", self.val_percent));
        }
        Ok(())
    }

    /// Learning rate of a 1-based epoch.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch <= self.decay_after_epoch {
            self.lr_initial
        } else {
            self.lr_decayed
        }
    }
}

/// Default schedule: 2e-4 for epochs 1-10, 1e-4 from epoch 11.
pub fn lr_schedule(epoch: usize) -> f64 {
    TrainConfig::default().lr(epoch)
}

/// Uniformly placed window of `crop_len` positions, tokens and frames
/// together. `None` (with a warning) when the example is too short.
pub fn sample_crop(ex: &AlignedExample, crop_len: usize, rng: &mut Rng) -> Option<AlignedExample> {
    if ex.len() < crop_len {
        log::warn!(
            "skipping {}: {} tokens is shorter than the crop length {crop_len}",
            ex.utterance_id,
            ex.len()
        );
        return None;
    }
    let start = rng.gen_range(0..=ex.len() - crop_len);
    Some(ex.crop(start, start + crop_len))
}

/// Shift-by-one pairs: inputs `ids[..T-1]`, targets `ids[1..]`.
pub fn make_targets(tokens: &TokenSequence) -> Result<(TokenSequence, Vec<usize>)> {
    let n = tokens.len();
    if n < 2 {
        return Err(Error::Contract(format!("need at least 2 tokens for a target, got {n}")));
    }
    Ok((tokens.slice(0, n - 1), tokens.ids()[1..].to_vec()))
}

/// Whether an utterance belongs to the held-out split. Depends only on the id.
pub fn is_validation(utterance_id: &str, val_percent: u64) -> bool {
    fnv1a64(utterance_id.as_bytes()) % 100 < val_percent
}
