//! Fixed-length labelled sequences, the model input.

use thiserror::Error;

use crate::numkit::Tensor;
use crate::preprocess::{DataTable, PreprocessError, ScalerState};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset layout: {0}")]
    Layout(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error(transparent)]
    Table(#[from] PreprocessError),
}

/// `n` sequences of `seq_len` steps with `n_features` values each, stored
/// sample-major (`sample × time × feature`), plus one class label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    feature_names: Vec<String>,
    seq_len: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl SequenceDataset {
    pub fn new(
        feature_names: Vec<String>,
        seq_len: usize,
        values: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, DatasetError> {
        let stride = seq_len * feature_names.len();
        if values.len() != labels.len() * stride {
            return Err(DatasetError::Layout(format!(
                "{} values for {} samples of {seq_len}×{}",
                values.len(),
                labels.len(),
                feature_names.len()
            )));
        }
        if !labels.is_empty() && stride == 0 {
            return Err(DatasetError::Layout("non-empty dataset with zero-sized samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Layout("non-finite feature value".into()));
        }
        Ok(Self {
            feature_names,
            seq_len,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn stride(&self) -> usize {
        self.seq_len * self.n_features()
    }

    /// The `seq_len × n_features` block of sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.values[i * s..(i + 1) * s]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes.max(self.num_classes())];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.stride());
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        Self {
            feature_names: self.feature_names.clone(),
            seq_len: self.seq_len,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// `batch × time × feature` tensor for the given samples.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut values = Vec::with_capacity(indices.len() * self.stride());
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        let t = Tensor::new(vec![indices.len(), self.seq_len, self.n_features()], values)
            .expect("dataset values are finite and consistently shaped");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// One row per `(sample, step)`, one column per feature.
    pub fn step_table(&self) -> DataTable {
        let f = self.n_features();
        let columns = (0..f)
            .map(|c| self.values.iter().skip(c).step_by(f).copied().collect())
            .collect();
        DataTable::from_dense(self.feature_names.clone(), columns)
            .expect("feature names are unique")
    }

    /// Per-sample time means of every feature plus a `label` column, the
    /// tabular view used for correlation-based selection.
    pub fn summary_table(&self, label_column: &str) -> Result<DataTable, DatasetError> {
        let f = self.n_features();
        let mut columns = vec![Vec::with_capacity(self.len()); f + 1];
        for i in 0..self.len() {
            let s = self.sample(i);
            for (c, col) in columns.iter_mut().take(f).enumerate() {
                let mean = s.iter().skip(c).step_by(f).sum::<f64>() / self.seq_len as f64;
                col.push(mean);
            }
            columns[f].push(self.labels[i] as f64);
        }
        let mut names = self.feature_names.clone();
        names.push(label_column.to_string());
        Ok(DataTable::from_dense(names, columns)?)
    }

    /// Applies a scaler fitted on [`step_table`](Self::step_table) to every value.
    pub fn scaled(&self, scaler: &ScalerState) -> Result<Self, DatasetError> {
        if scaler.columns != self.feature_names {
            return Err(DatasetError::Layout(format!(
                "scaler columns {:?} do not match features {:?}",
                scaler.columns, self.feature_names
            )));
        }
        let f = self.n_features();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| scaler.apply(k % f, v))
            .collect();
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Keeps only the named features, in the given order.
    pub fn with_features(&self, names: &[String]) -> Result<Self, DatasetError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|x| x == n)
                    .ok_or_else(|| DatasetError::UnknownFeature(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        let f = self.n_features();
        let mut values = Vec::with_capacity(self.len() * self.seq_len * idx.len());
        for row in self.values.chunks(f.max(1)) {
            values.extend(idx.iter().map(|&c| row[c]));
        }
        Ok(Self {
            feature_names: names.to_vec(),
            values,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SequenceDataset {
        // 3 samples, T = 2, features a, b
        SequenceDataset::new(
            vec!["a".into(), "b".into()],
            2,
            vec![1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.],
            vec![0, 1, 0],
        )
        .unwrap()
    }

    #[test]
    fn views() {
        let d = tiny();
        assert_eq!(d.sample(1), &[5., 6., 7., 8.]);
        let (t, labels) = d.batch(&[2, 0]);
        assert_eq!(t.shape(), &[2, 2, 2]);
        assert_eq!(t.values()[..4], [9., 10., 11., 12.]);
        assert_eq!(labels, vec![0, 0]);
        let st = d.step_table();
        assert_eq!(st.row_count(), 6);
        assert_eq!(st.dense_column(1).unwrap(), vec![2., 4., 6., 8., 10., 12.]);
        let sm = d.summary_table("label").unwrap();
        assert_eq!(sm.dense_column(0).unwrap(), vec![2., 6., 10.]);
        assert_eq!(sm.dense_column(2).unwrap(), vec![0., 1., 0.]);
        let only_b = d.with_features(&["b".into()]).unwrap();
        assert_eq!(only_b.sample(0), &[2., 4.]);
        assert_eq!(d.class_counts(2), vec![2, 1]);
    }

    #[test]
    fn layout_errors() {
        assert!(SequenceDataset::new(vec!["a".into()], 2, vec![1.0; 3], vec![0, 1]).is_err());
        assert!(SequenceDataset::new(vec!["a".into()], 1, vec![f64::NAN], vec![0]).is_err());
        assert!(tiny().with_features(&["zz".into()]).is_err());
    }
}
