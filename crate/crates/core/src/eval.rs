//! Time-aware filtered ranking, metric aggregation and robustness sweeps.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use tkg_tensor::{ParamStore, Tape};

use crate::data::{EntityId, RelationId, Split, Timestamp};
use crate::error::{CoreError, Result};
use crate::model::{Model, Settings};
use crate::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingResult {
    pub time: Timestamp,
    pub subject: EntityId,
    pub relation: RelationId,
    pub gold: EntityId,
    pub rank: usize,
}

/// Percentages over a set of ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub queries: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

pub const CSV_HEADER: &str = "variant,split,mrr,h1,h3,h10";

impl MetricReport {
    pub fn csv_row(&self, variant: &str, split: &str) -> String {
        format!(
            "{variant},{split},{:.4},{:.4},{:.4},{:.4}",
            self.mrr, self.hits1, self.hits3, self.hits10
        )
    }
}

/// Rank of `gold` among all entities except the other known answers.
/// Competitors tied with the gold score count as ranked ahead of it.
pub fn filtered_rank(logits: &[f64], gold: usize, known: &[usize]) -> Result<usize> {
    if gold >= logits.len() {
        return Err(CoreError::Data(format!(
            "gold entity {gold} outside {} candidates",
            logits.len()
        )));
    }
    let g = logits[gold];
    let ahead = logits
        .iter()
        .enumerate()
        .filter(|&(c, &v)| c != gold && v >= g && !known.contains(&c))
        .count();
    Ok(1 + ahead)
}

pub fn aggregate(ranks: &[usize]) -> Result<MetricReport> {
    if ranks.is_empty() {
        return Err(CoreError::Data("no ranks to aggregate".into()));
    }
    if ranks.contains(&0) {
        return Err(CoreError::Data("ranks start at 1".into()));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(MetricReport {
        queries: ranks.len(),
        mrr: 100.0 * ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
    })
}

/// Relative MRR loss in percent.
pub fn degradation(clean_mrr: f64, noisy_mrr: f64) -> f64 {
    if clean_mrr == 0.0 {
        0.0
    } else {
        100.0 * (clean_mrr - noisy_mrr) / clean_mrr
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub ranks: Vec<RankingResult>,
}

/// Filtered entity-prediction ranks for every query of `split`, in evaluation mode.
pub fn evaluate(
    ws: &Workspace,
    model: &Model,
    store: &ParamStore,
    settings: &Settings,
    split: Split,
) -> Result<Evaluation> {
    let mut ranks = Vec::new();
    // evaluation mode never draws from the generator
    let mut rng = tkg_tensor::seeded(0);
    for time in ws.times(split) {
        let step = ws.step(split, time)?;
        let history = ws.history_graphs(&step);
        let batch = Workspace::batch(&step, &history, false);
        let tape = Tape::new();
        let out = model.forward(&tape, store, settings, &batch, false, &mut rng)?;
        let logits = out.entity_logits.value();
        for (i, q) in step.queries.entity_queries.iter().enumerate() {
            let known: Vec<usize> = ws
                .known_objects(q.subject, q.relation, time)
                .iter()
                .map(|&o| o as usize)
                .collect();
            ranks.push(RankingResult {
                time,
                subject: q.subject,
                relation: q.relation,
                gold: q.object,
                rank: filtered_rank(logits.row(i), q.object as usize, &known)?,
            });
        }
    }
    let report = aggregate(&ranks.iter().map(|r| r.rank).collect::<Vec<_>>())?;
    Ok(Evaluation { report, ranks })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint {
    pub sigma: f64,
    pub report: MetricReport,
    pub degradation: f64,
}

/// Re-evaluates with `N(0, σ²)` noise added to the base entity embeddings.
/// `store` itself is left untouched.
pub fn robustness_sweep<R: Rng + ?Sized>(
    ws: &Workspace,
    model: &Model,
    store: &ParamStore,
    settings: &Settings,
    split: Split,
    levels: &[f64],
    rng: &mut R,
) -> Result<Vec<RobustnessPoint>> {
    if let Some(bad) = levels.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CoreError::Config(format!("noise level {bad} must be non-negative")));
    }
    let clean = evaluate(ws, model, store, settings, split)?.report;
    let mut out = Vec::with_capacity(levels.len());
    for &sigma in levels {
        let report = if sigma == 0.0 {
            clean
        } else {
            let mut noisy = store.clone();
            let normal = Normal::new(0.0, sigma).map_err(|e| CoreError::Config(e.to_string()))?;
            for v in noisy.value_mut(model.entity_emb).data_mut() {
                *v += normal.sample(rng);
            }
            evaluate(ws, model, &noisy, settings, split)?.report
        };
        out.push(RobustnessPoint {
            sigma,
            report,
            degradation: degradation(clean.mrr, report.mrr),
        });
    }
    Ok(out)
}

pub fn ranks_to_text(ranks: &[RankingResult]) -> String {
    let mut out = String::from("time\tsubject\trelation\tgold\trank\n");
    for r in ranks {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.time, r.subject, r.relation, r.gold, r.rank);
    }
    out
}
