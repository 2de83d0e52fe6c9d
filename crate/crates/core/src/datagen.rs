//! Seeded synthetic sequence classification data and its long-format CSV.
//!
//! Each feature follows a stationary AR(1) process with unit spread. Class 1
//! drifts by `+separability/2` along a fixed per-feature sign pattern and
//! class 0 by `−separability/2`, ramping linearly in time, so the class means
//! are `separability` noise spreads apart at the last step.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SequenceDataset};
use crate::rng::{stream_rng, Stream};

/// Lag-one autocorrelation of the noise process.
pub const AR_COEFFICIENT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("sequence csv: {0}")]
    Format(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_samples: usize,
    pub seq_len: usize,
    pub n_features: usize,
    /// Fraction of samples labelled 1.
    pub class_balance: f64,
    /// Class mean shift at the final step, in noise spreads.
    pub separability: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seq_len: 10,
            n_features: 6,
            class_balance: 0.5,
            separability: 2.0,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| Err(DataError::InvalidConfig(msg));
        if self.n_samples < 4 {
            return fail(format!("n_samples must be at least 4, got {}", self.n_samples));
        }
        if self.seq_len < 1 {
            return fail("seq_len must be at least 1".into());
        }
        if self.n_features < 1 {
            return fail("n_features must be at least 1".into());
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return fail(format!("class_balance must lie in (0, 1), got {}", self.class_balance));
        }
        if !(self.separability.is_finite() && self.separability >= 0.0) {
            return fail(format!("separability must be finite and non-negative, got {}", self.separability));
        }
        Ok(())
    }
}

pub fn feature_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("f{i}")).collect()
}

pub fn generate(config: &GenConfig) -> Result<SequenceDataset, DataError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Data);
    let n = config.n_samples;
    let positives = (n as f64 * config.class_balance).round() as usize;
    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i < positives)).collect();
    labels.shuffle(&mut rng);

    let (t_len, f_len) = (config.seq_len, config.n_features);
    let innovation = (1.0 - AR_COEFFICIENT * AR_COEFFICIENT).sqrt();
    let mut values = Vec::with_capacity(n * t_len * f_len);
    let mut noise = vec![0.0; f_len];
    for &label in &labels {
        let class_sign = if label == 1 { 1.0 } else { -1.0 };
        for (t, step) in (0..t_len).map(|t| (t, (t + 1) as f64 / t_len as f64)) {
            for (f, z) in noise.iter_mut().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                *z = if t == 0 { eps } else { AR_COEFFICIENT * *z + innovation * eps };
                let direction = if f % 2 == 0 { 1.0 } else { -1.0 };
                values.push(*z + class_sign * 0.5 * config.separability * direction * step);
            }
        }
    }
    Ok(SequenceDataset::new(feature_names(f_len), t_len, values, labels)?)
}

/// Long format: `sample_id,t,<features>,label` with the label only on `t = 0`.
pub fn write_csv<W: Write>(data: &SequenceDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_id".to_string(), "t".to_string()];
    header.extend(data.feature_names().iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    let f = data.n_features();
    for i in 0..data.len() {
        for (t, row) in data.sample(i).chunks(f).enumerate() {
            let mut record = vec![i.to_string(), t.to_string()];
            record.extend(row.iter().map(f64::to_string));
            record.push(if t == 0 { data.labels()[i].to_string() } else { String::new() });
            w.write_record(&record)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn export_csv(data: &SequenceDataset, path: &Path) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv(data, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(reader: R) -> Result<SequenceDataset, DataError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 4
        || header[0] != "sample_id"
        || header[1] != "t"
        || header.last().map(String::as_str) != Some("label")
    {
        return Err(DataError::Format(format!(
            "expected header sample_id,t,<features...>,label; got {header:?}"
        )));
    }
    let names = header[2..header.len() - 1].to_vec();
    let f = names.len();
    let mut values = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut seq_len: Option<usize> = None;
    let mut current_t = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let bad = |msg: &str| DataError::Format(format!("data row {}: {msg}", line + 1));
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let sample: usize = field(0).parse().map_err(|_| bad("bad sample_id"))?;
        let t: usize = field(1).parse().map_err(|_| bad("bad t"))?;
        if t == 0 {
            if let Some(len) = seq_len {
                if current_t + 1 != len {
                    return Err(bad("previous sample has a different length"));
                }
            } else if !labels.is_empty() {
                seq_len = Some(current_t + 1);
            }
            if sample != labels.len() {
                return Err(bad("sample ids must be contiguous from 0"));
            }
            let label = field(f + 2).parse().map_err(|_| bad("missing or bad label on t = 0"))?;
            labels.push(label);
        } else {
            if labels.is_empty() || sample + 1 != labels.len() || t != current_t + 1 {
                return Err(bad("steps must run 0, 1, 2, … within each sample"));
            }
            if seq_len.is_some_and(|len| t >= len) {
                return Err(bad("sample is longer than the first one"));
            }
            if !field(f + 2).is_empty() {
                return Err(bad("label only belongs on t = 0"));
            }
        }
        current_t = t;
        for k in 0..f {
            let v: f64 = field(k + 2).parse().map_err(|_| bad("bad feature value"))?;
            values.push(v);
        }
    }
    let seq_len = match (seq_len, labels.is_empty()) {
        (_, true) => 0,
        (Some(len), false) => {
            if current_t + 1 != len {
                return Err(DataError::Format("last sample is truncated".into()));
            }
            len
        }
        (None, false) => current_t + 1,
    };
    Ok(SequenceDataset::new(names, seq_len, values, labels)?)
}

pub fn import_csv(path: &Path) -> Result<SequenceDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file))
}
