use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, MetricSums, Metrics};
use crate::model::checkpoint::{save_checkpoint, Checkpoint};
use crate::model::{Batch, Dropout, Model, ModelConfig, Variant};
use crate::numcore::{adam_step, AdamState, Graph, ParameterSet};
use crate::rng::{indexed_stream, streams};
use crate::tokenizer::AlignedExample;
use crate::training::{make_targets, sample_crop, Dataset, EvalRecord, StepRecord, TrainConfig, TrainLog};

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub best_val: Option<Metrics>,
}

/// Owns the parameters and optimizer state of one run.
pub struct Trainer {
    model: Model,
    config: TrainConfig,
    params: ParameterSet,
    adam: AdamState,
    epochs_completed: usize,
    step: usize,
    best_val: Option<Metrics>,
    log: TrainLog,
    checkpoint_dir: Option<PathBuf>,
    graph: Graph,
    stopped: bool,
}

impl Trainer {
    /// Fresh parameters initialized from `config.seed`.
    pub fn new(model: ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate(&model)?;
        let model = Model::new(model)?;
        let params = model.init_params(config.seed)?;
        let adam = AdamState::new(&params, config.adam);
        Ok(Trainer {
            model,
            config,
            params,
            adam,
            epochs_completed: 0,
            step: 0,
            best_val: None,
            log: TrainLog::default(),
            checkpoint_dir: None,
            graph: Graph::new(),
            stopped: false,
        })
    }

    /// Continues from an epoch-end checkpoint written by this trainer.
    pub fn resume(ck: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate(&ck.config)?;
        let model = Model::new(ck.config)?;
        let adam = ck
            .adam
            .ok_or_else(|| Error::StateCorruption("checkpoint has no optimizer state to resume from".into()))?;
        let meta_usize = |key: &str| {
            ck.meta
                .get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::StateCorruption(format!("checkpoint meta lacks {key}")))
        };
        let epochs_completed = meta_usize("epochs_completed")?;
        let step = meta_usize("step")?;
        let best_val = match ck.meta.get("best_val") {
            Some(v) if !v.is_null() => {
                let f = |k: &str| v.get(k).and_then(|x| x.as_f64()).unwrap_or(f64::NAN);
                Some(Metrics::new(f("nll"), f("accuracy"), f("n_tokens") as usize)?)
            }
            _ => None,
        };
        Ok(Trainer {
            model,
            config,
            params: ck.params,
            adam,
            epochs_completed,
            step,
            best_val,
            log: TrainLog::default(),
            checkpoint_dir: None,
            graph: Graph::new(),
            stopped: false,
        })
    }

    /// Writes `last.wgp1` and `best.wgp1` into `dir`.
    pub fn with_checkpoint_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let best = self
            .best_val
            .map(|m| json!({"nll": m.nll(), "accuracy": m.accuracy(), "n_tokens": m.n_tokens()}));
        Checkpoint {
            config: self.model.config().clone(),
            params: self.params.clone(),
            adam: Some(self.adam.clone()),
            meta: json!({
                "epochs_completed": self.epochs_completed,
                "step": self.step,
                "best_val": best,
                "train": self.config,
            }),
        }
    }

    fn check_data(&self, examples: &[AlignedExample]) -> Result<()> {
        let cfg = self.model.config();
        for ex in examples {
            if let Some(&id) = ex.tokens.ids().iter().find(|&&id| id >= cfg.vocab) {
                return Err(Error::Vocabulary { id, vocab: cfg.vocab });
            }
            if cfg.variant == Variant::Hybrid {
                match &ex.frames {
                    None => {
                        return Err(Error::Contract(format!(
                            "HYBRID needs mel frames but {} has none",
                            ex.utterance_id
                        )))
                    }
                    Some(f) if !f.is_normalized() => {
                        return Err(Error::Contract(format!(
                            "HYBRID needs normalized frames but {} is raw log-mel",
                            ex.utterance_id
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// One optimizer step on a batch of equal-length crops.
    pub fn train_step(
        &mut self,
        crops: &[AlignedExample],
        epoch: usize,
        dropout: Option<&mut Dropout>,
    ) -> Result<StepRecord> {
        let mut inputs = Vec::with_capacity(crops.len());
        let mut targets = Vec::new();
        for c in crops {
            let (_, t) = make_targets(&c.tokens)?;
            inputs.push(c.crop(0, c.len() - 1));
            targets.extend(t);
        }
        let refs: Vec<&AlignedExample> = inputs.iter().collect();
        let batch = Batch::from_examples(&refs)?;
        let lr = self.config.lr(epoch);
        let g = &mut self.graph;
        g.reset();
        let logits = self.model.forward_with(g, &self.params, &batch, dropout)?;
        let loss = g.cross_entropy(logits, &targets)?;
        let loss_value = g.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NonFinite(diagnose(
                self.step + 1,
                epoch,
                loss_value,
                crops,
                &self.params,
            )));
        }
        let mut sums = MetricSums::default();
        sums.push_rows(g.value(logits), &targets);
        g.backward(loss, &mut self.params)?;
        if self.config.weight_decay > 0.0 {
            let wd = self.config.weight_decay;
            for (_, p) in self.params.iter_mut() {
                if p.value.rank() == 2 {
                    let w = p.value.data().to_vec();
                    p.grad.data_mut().iter_mut().zip(w).for_each(|(g, w)| *g += wd * w);
                }
            }
        }
        if let Some(clip) = self.config.grad_clip {
            let norm = self.params.grad_norm();
            if norm > clip {
                let s = clip / norm;
                for (_, p) in self.params.iter_mut() {
                    p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
                }
            }
        }
        adam_step(&mut self.params, &mut self.adam, lr)?;
        self.step += 1;
        let rec = StepRecord {
            step: self.step,
            epoch,
            lr,
            loss: loss_value,
            accuracy: sums.correct as f64 / sums.count as f64,
        };
        self.log.steps.push(rec.clone());
        Ok(rec)
    }

    fn validate_now(&mut self, val: &[AlignedExample], epoch: usize) -> Result<()> {
        if val.is_empty() {
            return Ok(());
        }
        let metrics = evaluate(&self.model, &self.params, val)?;
        log::info!("step {} epoch {epoch} val {metrics}", self.step);
        self.log.evals.push(EvalRecord {
            step: self.step,
            epoch,
            lr: self.config.lr(epoch),
            metrics,
        });
        if self.best_val.map_or(true, |b| metrics.nll() < b.nll()) {
            self.best_val = Some(metrics);
            if let Some(dir) = &self.checkpoint_dir {
                save_checkpoint(dir.join("best.wgp1"), &self.checkpoint())?;
            }
        }
        Ok(())
    }

    /// One epoch: every training example once in a seeded shuffled order,
    /// one random crop each, grouped into batches.
    pub fn run_epoch(&mut self, train: &[AlignedExample], val: &[AlignedExample]) -> Result<()> {
        let epoch = self.epochs_completed + 1;
        let mut rng = indexed_stream(self.config.seed, streams::DATA, epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let crops: Vec<AlignedExample> = order
            .iter()
            .filter_map(|&i| sample_crop(&train[i], self.config.crop_len, &mut rng))
            .collect();
        if crops.is_empty() {
            return Err(Error::EmptyCorpus(format!(
                "no training example has at least {} tokens",
                self.config.crop_len
            )));
        }
        let mut dropout = (self.config.dropout > 0.0).then(|| Dropout {
            p: self.config.dropout,
            rng: indexed_stream(self.config.seed, streams::DROPOUT, epoch as u64),
        });
        for chunk in crops.chunks(self.config.batch_size) {
            let rec = self.train_step(chunk, epoch, dropout.as_mut())?;
            log::debug!("step {} epoch {epoch} lr {:e} loss {:.5}", rec.step, rec.lr, rec.loss);
            if self.config.eval_every.is_some_and(|n| self.step % n == 0) {
                self.validate_now(val, epoch)?;
            }
            let hit_target = self.config.target_loss.is_some_and(|t| rec.loss < t);
            if hit_target || self.config.max_steps.is_some_and(|m| self.step >= m) {
                self.stopped = true;
                break;
            }
        }
        if !self.stopped {
            self.epochs_completed = epoch;
        }
        let last = self.log.last_loss().unwrap_or(f64::NAN);
        log::info!("epoch {epoch} done at step {} (train loss {last:.5})", self.step);
        self.validate_now(val, epoch)?;
        let final_epoch = self.stopped || epoch == self.config.epochs;
        if let Some(dir) = &self.checkpoint_dir {
            if final_epoch || epoch % self.config.checkpoint_every == 0 {
                save_checkpoint(dir.join("last.wgp1"), &self.checkpoint())?;
            }
        }
        Ok(())
    }

    /// Runs the remaining epochs, or until a step limit or target loss.
    pub fn fit(&mut self, train: &[AlignedExample], val: &[AlignedExample]) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptyCorpus("training split is empty".into()));
        }
        self.check_data(train)?;
        self.check_data(val)?;
        let started = Instant::now();
        while !self.stopped && self.epochs_completed < self.config.epochs {
            self.run_epoch(train, val)?;
        }
        self.log.wall_time += started.elapsed();
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            checkpoint: self.checkpoint(),
            log: self.log,
            best_val: self.best_val,
        }
    }
}

fn diagnose(step: usize, epoch: usize, loss: f64, crops: &[AlignedExample], params: &ParameterSet) -> String {
    let ids: Vec<&str> = crops.iter().map(|c| c.utterance_id.as_str()).collect();
    let all: Vec<usize> = crops.iter().flat_map(|c| c.tokens.ids().iter().copied()).collect();
    let mut msg = format!(
        "loss {loss} at step {step} (epoch {epoch}); batch {ids:?}; token ids in [{}, {}]",
        all.iter().min().unwrap_or(&0),
        all.iter().max().unwrap_or(&0)
    );
    let frames: Vec<f64> = crops
        .iter()
        .filter_map(|c| c.frames.as_ref())
        .flat_map(|f| f.frames.iter().copied())
        .collect();
    if !frames.is_empty() {
        let bad = frames.iter().filter(|v| !v.is_finite()).count();
        let lo = frames.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = frames.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        msg += &format!("; frames in [{lo:.3}, {hi:.3}] with {bad} non-finite");
    }
    let bad_params: Vec<&str> = params
        .iter()
        .filter(|(_, p)| !p.value.is_finite())
        .map(|(n, _)| n)
        .collect();
    msg += &format!("; non-finite parameters: {bad_params:?}");
    msg
}

/// Trains on the hash-selected training split of `dataset`, validating on
/// the rest, optionally writing checkpoints into `checkpoint_dir`.
pub fn train(
    model: ModelConfig,
    config: TrainConfig,
    dataset: &Dataset,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let (tr, val) = dataset.split(config.val_percent);
    let mut trainer = Trainer::new(model, config)?;
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
        trainer = trainer.with_checkpoint_dir(dir);
    }
    trainer.fit(&tr, &val)?;
    Ok(trainer.finish())
}
