//! Mini-batch training with a stratified train/validation split.
//!
//! All randomness derives from `TrainConfig::seed` through named streams:
//! initialization, split, per-epoch shuffles and dropout masks each draw from
//! their own stream, so a run is replayable bit for bit.

mod history;
mod optim;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SequenceDataset};
use crate::features::{pearson_matrix, select_features, FeatureError};
use crate::preprocess::{fit_zscore, PreprocessError, ScalerState};
use crate::recurrent::{Checkpoint, Mode, Model, ModelError, ModelSpec};
use crate::rng::{stream_rng, Stream};

pub use history::{EpochRecord, TrainingHistory};
pub use optim::{adam_step, sgd_step, Moments, Optimizer, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("cannot split: {0}")]
    Split(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("history csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub val_fraction: f64,
    pub seed: u64,
    /// Epochs without a validation-accuracy improvement before stopping;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            val_fraction: 0.2,
            seed: 42,
            early_stop_patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        // zero is allowed: it is the null-update baseline
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        Ok(())
    }
}

/// Seeded stratified split. Each class contributes
/// `round(n_c · val_fraction)` samples to validation, clamped so both sides
/// keep at least one. Returned index lists are ascending.
pub fn split_indices(
    labels: &[usize],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(TrainError::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (c, mut members) in by_class.into_iter().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            return Err(TrainError::Split(format!("class {c} has {n} sample; at least 2 are needed")));
        }
        members.shuffle(&mut rng);
        let k = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
        val.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    if train.is_empty() {
        return Err(TrainError::Split("dataset is empty".into()));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split(
    data: &SequenceDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(SequenceDataset, SequenceDataset), TrainError> {
    let (train, val) = split_indices(data.labels(), val_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&val)))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn correct(logits: &crate::numkit::Tensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(logits.row(i)) == l)
        .count()
}

/// Sample-weighted mean loss and accuracy of frozen parameters on `data`.
pub fn evaluate_loss(model: &Model, data: &SequenceDataset, batch_size: usize) -> Result<(f64, f64), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Split("cannot evaluate an empty dataset".into()));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let (mut loss_sum, mut hits) = (0.0, 0);
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk);
        let logits = model.logits(&x)?;
        let mut tape = crate::numkit::Tape::new();
        let l = tape.leaf(&logits);
        let loss = tape.softmax_cross_entropy(l, &y).map_err(ModelError::from)?;
        loss_sum += tape.value(loss).values()[0] * chunk.len() as f64;
        hits += correct(&logits, &y);
    }
    let n = data.len() as f64;
    Ok((loss_sum / n, hits as f64 / n))
}

/// Trains `model` in place on `train`, scoring `val` after every epoch.
///
/// With early stopping enabled the parameters of the best validation epoch
/// are restored at the end; otherwise the final parameters are kept.
pub fn fit(
    model: &mut Model,
    config: &TrainConfig,
    train: &SequenceDataset,
    val: &SequenceDataset,
) -> Result<TrainingHistory, TrainError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Split("training and validation sets must be non-empty".into()));
    }
    let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle);
    let mut dropout_rng = stream_rng(config.seed, Stream::Dropout);
    let mut moments: Vec<Moments> = model
        .params()
        .named()
        .iter()
        .map(|(_, t)| Moments::zeros(t.len()))
        .collect();
    let mut step = 0u64;
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, Model)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train.batch(chunk);
            model.params_mut().zero_grad();
            let (loss, logits) = model.loss_and_backward(&x, &y, Mode::Train(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b + 1, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            hits += correct(&logits, &y);
            step += 1;
            for ((_, t), m) in model.params_mut().named_mut().into_iter().zip(&mut moments) {
                let grad = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]);
                match config.optimizer {
                    Optimizer::Sgd => sgd_step(t.values_mut(), &grad, config.learning_rate),
                    Optimizer::Adam => adam_step(t.values_mut(), &grad, m, step, config.learning_rate),
                }
            }
        }
        model.params_mut().zero_grad();
        let n = train.len() as f64;
        let (val_loss, val_accuracy) = evaluate_loss(model, val, config.batch_size)?;
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            val_loss,
            train_accuracy: hits as f64 / n,
            val_accuracy,
        });
        if config.early_stop_patience > 0 {
            if best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc) {
                best = Some((val_accuracy, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(history)
}

/// Split, initialize from `spec` and fit on the raw (unscaled) data.
pub fn train(
    spec: &ModelSpec,
    config: &TrainConfig,
    data: &SequenceDataset,
) -> Result<(Model, TrainingHistory), TrainError> {
    config.validate()?;
    let (tr, va) = split(data, config.val_fraction, config.seed)?;
    let mut model = Model::init(spec.clone(), config.seed)?;
    let history = fit(&mut model, config, &tr, &va)?;
    Ok((model, history))
}

/// Correlation-based input selection applied to the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Number of features to keep.
    pub k: usize,
    pub redundancy_cap: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: 4,
            redundancy_cap: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Fit a z-score scaler on the training split and apply it everywhere.
    pub standardize: bool,
    pub selection: Option<SelectionConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            standardize: true,
            selection: None,
        }
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: Model,
    pub history: TrainingHistory,
    pub features: Vec<String>,
    pub scaler: Option<ScalerState>,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainedRun {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, self.features.clone(), self.scaler.clone())
    }
}

pub const LABEL_COLUMN: &str = "label";

/// Full training pipeline: split first, then derive feature selection and
/// scaling from the training part only, then fit.
///
/// `spec.input_size` is overwritten with the number of features that survive
/// selection; `spec.num_classes` is raised to cover every label present.
pub fn run_pipeline(
    spec: &ModelSpec,
    config: &TrainConfig,
    pipeline: &PipelineConfig,
    data: &SequenceDataset,
) -> Result<TrainedRun, TrainError> {
    config.validate()?;
    let (mut tr, mut va) = split(data, config.val_fraction, config.seed)?;

    let mut features = data.feature_names().to_vec();
    if let Some(sel) = &pipeline.selection {
        let corr = pearson_matrix(&tr.summary_table(LABEL_COLUMN)?)?;
        let chosen = select_features(&corr, LABEL_COLUMN, sel.k, sel.redundancy_cap)?;
        if chosen.features.is_empty() {
            return Err(TrainError::Config("feature selection kept no features".into()));
        }
        features = chosen.features;
        tr = tr.with_features(&features)?;
        va = va.with_features(&features)?;
    }

    let scaler = if pipeline.standardize {
        let s = fit_zscore(&tr.step_table())?;
        tr = tr.scaled(&s)?;
        va = va.scaled(&s)?;
        Some(s)
    } else {
        None
    };

    let spec = ModelSpec {
        input_size: features.len(),
        num_classes: spec.num_classes.max(data.num_classes()),
        ..spec.clone()
    };
    let mut model = Model::init(spec, config.seed)?;
    let history = fit(&mut model, config, &tr, &va)?;
    Ok(TrainedRun {
        model,
        history,
        features,
        scaler,
        train_size: tr.len(),
        val_size: va.len(),
    })
}
