//! Verification metrics by depth, the majority-class baseline, completion
//! Top-K accuracy and first-order ablation tables.

mod ablation;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{CompletionInstance, Label, LabeledEquation};
use crate::model::{predict, Model, ModelError};

pub use ablation::{ablation_report, AblationRow, AblationRun, AblationTable, Stat};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {predictions} predictions, {labels} labels, {depths} depths")]
    LengthMismatch {
        predictions: usize,
        labels: usize,
        depths: usize,
    },
    #[error("empty dataset")]
    Empty,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("unpaired runs: {0}")]
    Unpaired(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Confusion counts with Correct as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, pred: Label, label: Label) {
        match (pred, label) {
            (Label::Correct, Label::Correct) => self.tp += 1,
            (Label::Correct, Label::Incorrect) => self.fp += 1,
            (Label::Incorrect, Label::Correct) => self.fn_ += 1,
            (Label::Incorrect, Label::Incorrect) => self.tn += 1,
        }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.n() as f64
    }

    /// `None` when nothing was predicted Correct.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when nothing is labeled Correct.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Metrics overall and per depth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DepthMetrics {
    pub overall: Confusion,
    pub by_depth: BTreeMap<usize, Confusion>,
}

/// One line of a metrics file. `depth` is `None` for the overall row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub split: String,
    pub depth: Option<usize>,
    pub acc: f64,
    pub prec: Option<f64>,
    pub rcl: Option<f64>,
    pub n: usize,
}

impl DepthMetrics {
    /// Per-depth records in depth order, then the overall record.
    pub fn records(&self, split: &str) -> Vec<MetricRecord> {
        let row = |depth, c: &Confusion| MetricRecord {
            split: split.to_string(),
            depth,
            acc: c.accuracy(),
            prec: c.precision(),
            rcl: c.recall(),
            n: c.n(),
        };
        self.by_depth
            .iter()
            .map(|(&d, c)| row(Some(d), c))
            .chain(std::iter::once(row(None, &self.overall)))
            .collect()
    }
}

pub fn verification_metrics(
    predictions: &[Label],
    labels: &[Label],
    depths: &[usize],
) -> Result<DepthMetrics, EvalError> {
    if predictions.len() != labels.len() || labels.len() != depths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
            depths: depths.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut m = DepthMetrics::default();
    for ((&p, &l), &d) in predictions.iter().zip(labels).zip(depths) {
        m.overall.add(p, l);
        m.by_depth.entry(d).or_default().add(p, l);
    }
    Ok(m)
}

/// The more frequent label of `train` (Correct on a tie).
pub fn majority_label(train: &[LabeledEquation]) -> Label {
    let correct = train.iter().filter(|e| e.label == Label::Correct).count();
    if 2 * correct >= train.len() {
        Label::Correct
    } else {
        Label::Incorrect
    }
}

/// Metrics on `data` of always predicting the majority label of `train`.
pub fn majority_baseline(train: &[LabeledEquation], data: &[LabeledEquation]) -> Result<DepthMetrics, EvalError> {
    if train.is_empty() {
        return Err(EvalError::Empty);
    }
    let label = majority_label(train);
    let (labels, depths) = labels_and_depths(data);
    verification_metrics(&vec![label; data.len()], &labels, &depths)
}

fn labels_and_depths(data: &[LabeledEquation]) -> (Vec<Label>, Vec<usize>) {
    data.iter().map(|e| (e.label, e.depth)).unzip()
}

/// Evaluation-mode predictions for every equation.
pub fn predictions(model: &Model, data: &[LabeledEquation]) -> Result<Vec<Label>, ModelError> {
    data.par_iter().map(|e| Ok(predict(&model.output(&e.expr)?))).collect()
}

/// Runs the model on `data` and scores it.
pub fn evaluate(model: &Model, data: &[LabeledEquation]) -> Result<DepthMetrics, EvalError> {
    let preds = predictions(model, data)?;
    let (labels, depths) = labels_and_depths(data);
    verification_metrics(&preds, &labels, &depths)
}

/// One ranked completion instance.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRecord {
    pub id: usize,
    pub blank_depth: usize,
    /// Candidate indices, best first.
    pub ranked: Vec<usize>,
    pub gold: Vec<usize>,
}

impl CompletionRecord {
    /// Ranks candidates by descending score; equal scores keep index order.
    pub fn from_scores(id: usize, blank_depth: usize, scores: &[f64], gold: Vec<usize>) -> Self {
        let mut ranked: Vec<usize> = (0..scores.len()).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        CompletionRecord {
            id,
            blank_depth,
            ranked,
            gold,
        }
    }

    /// Whether a gold candidate is among the first `k`.
    pub fn hit(&self, k: usize) -> bool {
        self.ranked.iter().take(k).any(|c| self.gold.contains(c))
    }
}

/// Scores every candidate fill of `inst` by the verifier's probability of
/// Correct.
pub fn rank_completion(model: &Model, id: usize, inst: &CompletionInstance) -> Result<CompletionRecord, ModelError> {
    let scores = (0..inst.candidates.len())
        .into_par_iter()
        .map(|i| Ok(model.output(&inst.filled(i))?.prob))
        .collect::<Result<Vec<f64>, ModelError>>()?;
    Ok(CompletionRecord::from_scores(
        id,
        inst.blank_depth,
        &scores,
        inst.gold.clone(),
    ))
}

/// Fraction of records with a gold candidate in the top `k` (0 when empty).
pub fn topk_accuracy(records: &[CompletionRecord], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if records.is_empty() {
        return Ok(0.0);
    }
    Ok(records.iter().filter(|r| r.hit(k)).count() as f64 / records.len() as f64)
}

/// One line of a Top-K file. `depth` is the blank depth, `None` overall.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopKRecord {
    pub depth: Option<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    pub topk: f64,
    pub n: usize,
}

/// Top-K per blank depth and overall, for every `k` in `ks`.
pub fn topk_report(records: &[CompletionRecord], ks: &[usize]) -> Result<Vec<TopKRecord>, EvalError> {
    let mut by_depth: BTreeMap<usize, Vec<CompletionRecord>> = BTreeMap::new();
    for r in records {
        by_depth.entry(r.blank_depth).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    let groups = by_depth
        .iter()
        .map(|(&d, rs)| (Some(d), rs.as_slice()))
        .chain(std::iter::once((None, records)));
    for (depth, rs) in groups {
        for &k in ks {
            out.push(TopKRecord {
                depth,
                k,
                topk: topk_accuracy(rs, k)?,
                n: rs.len(),
            });
        }
    }
    Ok(out)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, rows: &[T]) -> Result<(), EvalError> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Writes rows as CSV with a header; `None` becomes an empty field.
pub fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
