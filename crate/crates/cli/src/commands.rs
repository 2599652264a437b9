use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use wgpt_core::audio::write_wav_pcm16;
use wgpt_core::canonical::from_json_str;
use wgpt_core::evaluation::{ablation_compare, evaluate, sample, SamplerConfig};
use wgpt_core::formats::{load_tokens, save_mel, save_stats, save_tokens};
use wgpt_core::model::checkpoint::{load_checkpoint, save_checkpoint};
use wgpt_core::model::{Model, ModelConfig, Variant};
use wgpt_core::synth::{self, Profile};
use wgpt_core::training::{load_dataset, write_manifest, Dataset, ManifestEntry, TrainConfig, Trainer};
use wgpt_core::Error;

use crate::config::{DataPaths, RunConfig};

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn train(config: &Path, resume: Option<&Path>, init_only: bool) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config)?;
    let out = &cfg.data.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("run.json"), &cfg.to_canonical()?)?;
    if init_only {
        let trainer = Trainer::new(cfg.model.clone(), cfg.train.clone())?;
        let path = out.join("init.wgp1");
        save_checkpoint(&path, &trainer.checkpoint())?;
        println!("wrote freshly initialized {} to {}", cfg.model.variant, path.display());
        return Ok(());
    }
    let dataset = load_dataset(&cfg.data.manifest, cfg.model.variant == Variant::Hybrid)?;
    let (tr, val) = dataset.split(cfg.train.val_percent);
    log::info!("{} training / {} validation utterances", tr.len(), val.len());
    let trainer = match resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            if ck.config != cfg.model {
                bail!(Error::Config(format!(
                    "{} was trained with a different model config",
                    p.display()
                )));
            }
            Trainer::resume(ck, cfg.train.clone())?
        }
        None => Trainer::new(cfg.model.clone(), cfg.train.clone())?,
    };
    let mut trainer = trainer.with_checkpoint_dir(out);
    let fitted = trainer.fit(&tr, &val);
    write_text(&out.join("train_log.csv"), &trainer.log().to_csv())?;
    fitted?;
    let outcome = trainer.finish();
    let last = outcome.log.steps.last();
    println!(
        "{}: {} steps, {} epochs, final train loss {:.4}, {:.1}s",
        cfg.model.variant,
        last.map_or(0, |s| s.step),
        last.map_or(0, |s| s.epoch),
        last.map_or(f64::NAN, |s| s.loss),
        outcome.log.wall_time.as_secs_f64()
    );
    if let Some(best) = outcome.best_val {
        println!("best validation: {best}");
    }
    println!("checkpoints and logs in {}", out.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Val,
    All,
}

pub fn eval(checkpoint: &Path, manifest: &Path, split: Split, out: Option<&Path>) -> anyhow::Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let val_percent = ck
        .meta
        .get("train")
        .and_then(|t| t.get("val_percent"))
        .and_then(|v| v.as_u64())
        .unwrap_or(TrainConfig::default().val_percent);
    let model = Model::new(ck.config)?;
    let dataset = load_dataset(manifest, model.variant() == Variant::Hybrid)?;
    let (tr, val) = dataset.split(val_percent);
    let examples = match split {
        Split::Train => tr,
        Split::Val => val,
        Split::All => dataset.examples,
    };
    let m = evaluate(&model, &ck.params, &examples)?;
    let params = model.count_parameters().total;
    let mut csv = String::from("model,params,nll,accuracy,ppl,n_tokens\n");
    let _ = writeln!(
        csv,
        "{},{},{:.6},{:.6},{:.6},{}",
        model.variant(),
        params,
        m.nll(),
        m.accuracy(),
        m.ppl(),
        m.n_tokens()
    );
    println!(
        "{:<8} {:>10} {:>8} {:>9} {:>9}",
        "Model", "#Param", "NLL", "Accuracy", "PPL"
    );
    println!(
        "{:<8} {:>10} {:>8.4} {:>8.2}% {:>9.3}",
        model.variant().name(),
        params,
        m.nll(),
        100.0 * m.accuracy(),
        m.ppl()
    );
    if let Some(p) = out {
        write_text(p, &csv)?;
    } else {
        print!("{csv}");
    }
    Ok(())
}

pub fn sample_cmd(checkpoint: &Path, prompt: &Path, sc: SamplerConfig, out: &Path) -> anyhow::Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let model = Model::new(ck.config)?;
    let prompt = load_tokens(prompt)?;
    let seq = sample(&model, &ck.params, &prompt, &sc)?;
    save_tokens(out, &seq)?;
    println!(
        "{} prompt + {} sampled tokens -> {}",
        prompt.len(),
        seq.len() - prompt.len(),
        out.display()
    );
    Ok(())
}

/// A run config, a bare model config or a preset name.
pub fn params(config: Option<&Path>, variant: Option<Variant>) -> anyhow::Result<()> {
    let models: Vec<ModelConfig> = match (config, variant) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            match RunConfig::parse(&text) {
                Ok(run) => std::iter::once(run.model).chain(run.compare).collect(),
                Err(run_err) => match from_json_str::<ModelConfig>(&text) {
                    Ok(m) => vec![m],
                    Err(_) => return Err(run_err.in_file(p).into()),
                },
            }
        }
        (None, Some(v)) => vec![ModelConfig::preset(v)],
        (None, None) => [Variant::GptS, Variant::GptL, Variant::Hybrid]
            .map(ModelConfig::preset)
            .to_vec(),
    };
    for m in models {
        println!("{}", Model::new(m)?.count_parameters());
    }
    Ok(())
}

pub fn compare(config: &Path, seeds: usize) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config)?;
    let models = if cfg.compare.is_empty() {
        [Variant::GptS, Variant::GptL, Variant::Hybrid]
            .map(ModelConfig::preset)
            .to_vec()
    } else {
        cfg.compare.clone()
    };
    let needs_frames = models.iter().any(|m| m.variant == Variant::Hybrid);
    let dataset = load_dataset(&cfg.data.manifest, needs_frames)?;
    let seeds: Vec<u64> = (0..seeds as u64).map(|i| cfg.train.seed + i).collect();
    let report = ablation_compare(&dataset, &models, &cfg.train, &seeds)?;
    println!("{report}");
    std::fs::create_dir_all(&cfg.data.out_dir)?;
    let csv = cfg.data.out_dir.join("compare.csv");
    write_text(&csv, &report.to_csv())?;
    println!("per-run rows in {}", csv.display());
    Ok(())
}

fn write_corpus(dir: &Path, dataset: &Dataset) -> anyhow::Result<()> {
    let tokens_dir = dir.join("tokens");
    let mels_dir = dir.join("mels");
    std::fs::create_dir_all(&tokens_dir)?;
    let mut entries = Vec::new();
    for ex in &dataset.examples {
        let tokens_path = tokens_dir.join(format!("{}.wgt1", ex.utterance_id));
        save_tokens(&tokens_path, &ex.tokens)?;
        let mel_path = match &ex.frames {
            Some(f) => {
                std::fs::create_dir_all(&mels_dir)?;
                let p = mels_dir.join(format!("{}.wgm1", ex.utterance_id));
                save_mel(&p, f)?;
                Some(p)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            utterance_id: ex.utterance_id.clone(),
            tokens_path,
            mel_path,
        });
    }
    write_manifest(dir.join("manifest.tsv"), &entries)?;
    Ok(())
}

fn write_run(dir: &Path, model: ModelConfig, train: TrainConfig, compare: Vec<ModelConfig>) -> anyhow::Result<()> {
    let run = RunConfig {
        model,
        train,
        data: DataPaths {
            manifest: "manifest.tsv".into(),
            out_dir: "run".into(),
        },
        compare,
    };
    write_text(&dir.join("run.json"), &run.to_canonical()?)
}

pub fn synth(out: &Path, profile: Profile, n: Option<usize>, seed: u64) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match profile {
        Profile::Memorize => {
            let examples = synth::memorize(n.unwrap_or(1), seed)?;
            write_corpus(out, &Dataset::new(examples))?;
            let (model, train) = synth::memorize_setup(seed);
            write_run(out, model, train, Vec::new())?;
        }
        Profile::HybridAdvantage => {
            let n = n.unwrap_or(240);
            if n < 200 {
                log::warn!("hybrid-advantage with {n} < 200 sequences is below the intended corpus size");
            }
            let (examples, stats) = synth::hybrid_advantage(n, seed)?;
            write_corpus(out, &Dataset::new(examples))?;
            save_stats(out.join("stats.wgs1"), &stats)?;
            let (hybrid, gpt_s, train) = synth::hybrid_advantage_setup(seed);
            write_run(out, hybrid.clone(), train, vec![gpt_s, hybrid])?;
        }
        Profile::SmokeWav => {
            if n.is_some_and(|n| n != 6) {
                bail!(Error::Config("the smoke-wav profile always has 6 clips".into()));
            }
            for (name, buf) in synth::smoke_wavs(seed) {
                write_wav_pcm16(out.join(format!("{name}.wav")), &buf)?;
            }
        }
    }
    println!("wrote {profile:?} corpus to {}", out.display());
    Ok(())
}
