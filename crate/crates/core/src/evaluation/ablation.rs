use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Metrics};
use crate::model::{Model, ModelConfig, Variant};
use crate::training::{Dataset, TrainConfig, Trainer};

/// One trained model under one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub variant: Variant,
    pub seed: u64,
    pub params: usize,
    pub metrics: Metrics,
}

/// Across-seed mean and sample standard deviation for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSummary {
    pub variant: Variant,
    pub params: usize,
    pub nll: (f64, f64),
    pub ppl: (f64, f64),
    pub accuracy: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub summaries: Vec<ModelSummary>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl AblationReport {
    pub fn summary(&self, variant: Variant) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    /// Mean HYBRID minus mean GPT_S, for NLL, accuracy and PPL.
    pub fn hybrid_minus_gpt_s(&self) -> Option<(f64, f64, f64)> {
        let h = self.summary(Variant::Hybrid)?;
        let s = self.summary(Variant::GptS)?;
        Some((h.nll.0 - s.nll.0, h.accuracy.0 - s.accuracy.0, h.ppl.0 - s.ppl.0))
    }

    /// One row per run, then one per model summary.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,seed,params,nll,nll_std,accuracy,accuracy_std,ppl,ppl_std\n");
        for r in &self.runs {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{:.6},,{:.6},,{:.6},",
                r.variant,
                r.seed,
                r.params,
                m.nll(),
                m.accuracy(),
                m.ppl()
            );
        }
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},mean,{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                s.variant, s.params, s.nll.0, s.nll.1, s.accuracy.0, s.accuracy.1, s.ppl.0, s.ppl.1
            );
        }
        out
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>10} {:>18} {:>20} {:>20}",
            "Model", "#Param", "NLL", "Accuracy", "PPL"
        )?;
        for s in &self.summaries {
            writeln!(
                f,
                "{:<8} {:>10} {:>18} {:>20} {:>20}",
                s.variant.name(),
                s.params,
                format!("{:.4} ± {:.4}", s.nll.0, s.nll.1),
                format!("{:.2}% ± {:.2}", 100.0 * s.accuracy.0, 100.0 * s.accuracy.1),
                format!("{:.3} ± {:.3}", s.ppl.0, s.ppl.1)
            )?;
        }
        if let Some((dn, da, dp)) = self.hybrid_minus_gpt_s() {
            let sign = |x: f64| {
                if x < 0.0 {
                    "-"
                } else if x > 0.0 {
                    "+"
                } else {
                    "0"
                }
            };
            write!(
                f,
                "HYBRID - GPT_S: nll {dn:+.4} ({}), accuracy {:+.2}% ({}), ppl {dp:+.3} ({})",
                sign(dn),
                100.0 * da,
                sign(da),
                sign(dp)
            )?;
        }
        Ok(())
    }
}

/// Trains every model under every seed on the same split and reports
/// validation metrics. Each run uses `train` with its seed replaced.
pub fn ablation_compare(
    dataset: &Dataset,
    models: &[ModelConfig],
    train: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    if seeds.len() < 3 {
        return Err(Error::Config(format!(
            "ablation needs at least 3 seeds, got {}",
            seeds.len()
        )));
    }
    let (tr, val) = dataset.split(train.val_percent);
    if val.is_empty() {
        return Err(Error::EmptyCorpus(
            "validation split is empty; raise val_percent".into(),
        ));
    }
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for cfg in models {
        let params = Model::new(cfg.clone())?.count_parameters().total;
        let mut per_seed = Vec::new();
        for &seed in seeds {
            let tc = TrainConfig { seed, ..train.clone() };
            let mut trainer = Trainer::new(cfg.clone(), tc)?;
            trainer.fit(&tr, &[])?;
            let metrics = evaluate(trainer.model(), trainer.params(), &val)?;
            log::info!("{} seed {seed}: {metrics}", cfg.variant);
            per_seed.push(metrics);
            runs.push(AblationRun {
                variant: cfg.variant,
                seed,
                params,
                metrics,
            });
        }
        let col = |f: fn(&Metrics) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>());
        summaries.push(ModelSummary {
            variant: cfg.variant,
            params,
            nll: col(Metrics::nll),
            ppl: col(Metrics::ppl),
            accuracy: col(Metrics::accuracy),
        });
    }
    Ok(AblationReport { runs, summaries })
}
