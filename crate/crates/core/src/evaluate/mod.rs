//! Confusion matrices, the four threshold metrics, ROC/AUC and report
//! rendering. Class 1 is the positive class.

mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SequenceDataset};
use crate::recurrent::{Checkpoint, Model, ModelError};

pub use render::{render_report, ReportFormat};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{labels} labels but {predictions} predictions")]
    Length { labels: usize, predictions: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label or prediction {value} outside 0..{classes}")]
    Class { value: usize, classes: usize },
    #[error("AUC is undefined: only class {0} is present")]
    SingleClass(usize),
    #[error("score {0} is not a probability")]
    Score(f64),
    #[error("at least one report is needed")]
    NoReports,
    #[error("report json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts with the positive and negative classes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

fn check_lengths(labels: &[usize], predictions: usize) -> Result<(), EvalError> {
    if labels.len() != predictions {
        return Err(EvalError::Length {
            labels: labels.len(),
            predictions,
        });
    }
    Ok(())
}

fn check_class(value: usize, classes: usize) -> Result<(), EvalError> {
    if value >= classes {
        return Err(EvalError::Class { value, classes });
    }
    Ok(())
}

pub fn confusion(labels: &[usize], predictions: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    check_lengths(labels, predictions.len())?;
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        check_class(y, 2)?;
        check_class(p, 2)?;
        match (y, p) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fp += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Accuracy is always defined for a non-empty matrix; the others are `None`
/// when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean; two zero rates give zero.
fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision,
        recall,
        f1: precision.zip(recall).map(|(p, r)| harmonic(p, r)),
    })
}

/// `k × k` counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiConfusion {
    pub counts: Vec<Vec<usize>>,
}

impl MultiConfusion {
    pub fn new(labels: &[usize], predictions: &[usize], classes: usize) -> Result<Self, EvalError> {
        check_lengths(labels, predictions.len())?;
        let mut counts = vec![vec![0; classes]; classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            check_class(y, classes)?;
            check_class(p, classes)?;
            counts[y][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Binary view with `class` as the positive class.
    pub fn one_vs_rest(&self, class: usize) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for (y, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                match (y == class, p == class) {
                    (true, true) => cm.tp += n,
                    (false, false) => cm.tn += n,
                    (false, true) => cm.fp += n,
                    (true, false) => cm.fn_ += n,
                }
            }
        }
        cm
    }

    /// Overall accuracy plus macro averages of the one-vs-rest precision,
    /// recall and F1, each taken over the classes where it is defined.
    pub fn macro_metrics(&self) -> Result<Metrics, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::Empty);
        }
        let diag: usize = (0..self.classes()).map(|c| self.counts[c][c]).sum();
        let per: Vec<Metrics> = (0..self.classes())
            .map(|c| metrics(&self.one_vs_rest(c)))
            .collect::<Result<_, _>>()?;
        let mean = |f: fn(&Metrics) -> Option<f64>| {
            let vals: Vec<f64> = per.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        Ok(Metrics {
            accuracy: diag as f64 / total as f64,
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve over descending distinct thresholds, with samples that share a
/// score entering together, and its trapezoidal area.
pub fn roc_auc(labels: &[usize], scores: &[f64]) -> Result<(Vec<RocPoint>, f64), EvalError> {
    check_lengths(labels, scores.len())?;
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    for &y in labels {
        check_class(y, 2)?;
    }
    if let Some(&s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(EvalError::Score(s));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass(labels[0]));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("starts at the origin");
        let next = RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
        points.push(next);
    }
    Ok((points, auc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub model: String,
    pub confusion: ConfusionMatrix,
    pub metrics: ReportMetrics,
    /// Where the ROC points were written, if anywhere.
    pub curves_file: Option<String>,
    pub roc: Vec<RocPoint>,
}

impl EvalReport {
    /// Builds the report from labels, hard predictions and positive-class
    /// scores. AUC (and the curve) are left empty when only one class occurs.
    pub fn from_predictions(
        model: &str,
        labels: &[usize],
        predictions: &[usize],
        scores: &[f64],
    ) -> Result<Self, EvalError> {
        let cm = confusion(labels, predictions)?;
        let m = metrics(&cm)?;
        let (roc, auc) = match roc_auc(labels, scores) {
            Ok((roc, auc)) => (roc, Some(auc)),
            Err(EvalError::SingleClass(_)) => (Vec::new(), None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            version: REPORT_VERSION,
            model: model.to_string(),
            confusion: cm,
            metrics: ReportMetrics {
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                auc,
            },
            curves_file: None,
            roc,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }

    /// `fpr,tpr` rows.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.roc {
            out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
        }
        out
    }
}

/// Positive-class probabilities and argmax predictions for every sample.
pub fn predict(model: &Model, data: &SequenceDataset, batch_size: usize) -> Result<(Vec<usize>, Vec<f64>), EvalError> {
    if data.is_empty() {
        return Err(EvalError::Empty);
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let (mut preds, mut scores) = (Vec::with_capacity(data.len()), Vec::with_capacity(data.len()));
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk);
        let proba = model.predict_proba(&x)?;
        for i in 0..chunk.len() {
            let row = proba.row(i);
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            preds.push(best);
            scores.push(row.get(1).copied().unwrap_or(0.0));
        }
    }
    Ok((preds, scores))
}

/// Binary evaluation of frozen parameters on already prepared data.
pub fn evaluate_model(model: &Model, data: &SequenceDataset, name: &str) -> Result<EvalReport, EvalError> {
    if model.spec().num_classes != 2 {
        return Err(EvalError::Class {
            value: model.spec().num_classes,
            classes: 2,
        });
    }
    let (preds, scores) = predict(model, data, 256)?;
    EvalReport::from_predictions(name, data.labels(), &preds, &scores)
}

/// Restores the checkpoint, applies its feature selection and scaler to raw
/// `data`, and evaluates.
pub fn evaluate_checkpoint(ck: &Checkpoint, data: &SequenceDataset, name: &str) -> Result<EvalReport, EvalError> {
    let model = ck.model()?;
    let mut prepared = data.with_features(&ck.features)?;
    if let Some(scaler) = &ck.scaler {
        prepared = prepared.scaled(scaler)?;
    }
    evaluate_model(&model, &prepared, name)
}
