use std::fmt::Write as _;
use std::time::Duration;

use crate::evaluation::Metrics;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub metrics: Metrics,
}

/// Everything a run logged, in step order.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub wall_time: Duration,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "step,epoch,lr,split,nll,ppl,acc";

    pub fn last_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    /// Rows for both splits, ordered by step with training rows first.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(usize, u8, String)> = Vec::new();
        for s in &self.steps {
            rows.push((
                s.step,
                0,
                format!(
                    "{},{},{:e},train,{:.6},{:.6},{:.6}",
                    s.step,
                    s.epoch,
                    s.lr,
                    s.loss,
                    s.loss.exp(),
                    s.accuracy
                ),
            ));
        }
        for e in &self.evals {
            let m = &e.metrics;
            rows.push((
                e.step,
                1,
                format!(
                    "{},{},{:e},val,{:.6},{:.6},{:.6}",
                    e.step,
                    e.epoch,
                    e.lr,
                    m.nll(),
                    m.ppl(),
                    m.accuracy()
                ),
            ));
        }
        rows.sort_by_key(|r| (r.0, r.1));
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (_, _, line) in rows {
            let _ = writeln!(out, "{line}");
        }
        out
    }
}
