//! Tabular cleaning and z-score scaling.
//!
//! Cleaning resolves missing cells according to a [`MissingPolicy`] and then
//! removes exact duplicate rows. Scaling maps every cell to
//! `(value − mean) / spread` with the population standard deviation.

mod table;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::DataTable;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("table has no rows")]
    EmptyTable,
    #[error("column {column:?} is missing at row {row}")]
    Missing { column: String, row: usize },
    #[error("column {0:?} has no present values to impute from")]
    DegenerateColumn(String),
    #[error("non-finite value in column {column:?} at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("row {row}, column {column:?}: cannot parse {field:?} as a number")]
    Parse {
        row: usize,
        column: String,
        field: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How [`clean`] resolves missing cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MissingPolicy {
    DropRow,
    ImputeMean,
    ImputeConstant { value: f64 },
}

impl Default for MissingPolicy {
    fn default() -> Self {
        Self::ImputeMean
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_rows: usize,
    pub output_rows: usize,
    pub duplicates_removed: usize,
    /// Per column, in table order.
    pub missing_imputed: Vec<usize>,
    pub rows_dropped: usize,
}

/// Resolves missing cells, then drops exact duplicate rows keeping the first
/// occurrence. The output has no missing cells.
///
/// Duplicates are detected after imputation so that a second call is always a
/// no-op.
pub fn clean(
    table: &DataTable,
    policy: MissingPolicy,
) -> Result<(DataTable, CleanReport), PreprocessError> {
    if table.row_count() == 0 || table.column_count() == 0 {
        return Err(PreprocessError::EmptyTable);
    }
    let mut report = CleanReport {
        input_rows: table.row_count(),
        missing_imputed: vec![0; table.column_count()],
        ..CleanReport::default()
    };

    let filled = match policy {
        MissingPolicy::DropRow => {
            let keep: Vec<usize> = (0..table.row_count())
                .filter(|&r| table.columns().iter().all(|c| c[r].is_some()))
                .collect();
            report.rows_dropped = table.row_count() - keep.len();
            table.select_rows(&keep)
        }
        MissingPolicy::ImputeMean | MissingPolicy::ImputeConstant { .. } => {
            let mut columns = Vec::with_capacity(table.column_count());
            for (c, col) in table.columns().iter().enumerate() {
                let missing = col.iter().filter(|v| v.is_none()).count();
                report.missing_imputed[c] = missing;
                let fill = match policy {
                    MissingPolicy::ImputeConstant { value } => value,
                    _ if missing == 0 => 0.0,
                    _ => {
                        let present: Vec<f64> = col.iter().flatten().copied().collect();
                        if present.is_empty() {
                            return Err(PreprocessError::DegenerateColumn(
                                table.column_names()[c].clone(),
                            ));
                        }
                        present.iter().sum::<f64>() / present.len() as f64
                    }
                };
                columns.push(col.iter().map(|v| Some(v.unwrap_or(fill))).collect());
            }
            table.with_columns(columns)
        }
    };

    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..filled.row_count())
        .filter(|&r| seen.insert(row_key(&filled, r)))
        .collect();
    report.duplicates_removed = filled.row_count() - keep.len();
    let out = filled.select_rows(&keep);
    report.output_rows = out.row_count();
    Ok((out, report))
}

fn row_key(table: &DataTable, r: usize) -> Vec<Option<u64>> {
    // +0.0 and −0.0 compare equal, so they must hash equal.
    table
        .columns()
        .iter()
        .map(|c| c[r].map(|v| if v == 0.0 { 0 } else { v.to_bits() }))
        .collect()
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub spread: Vec<f64>,
}

impl ScalerState {
    pub fn is_degenerate(&self, c: usize) -> bool {
        self.spread[c] == 0.0
    }

    pub fn degenerate_columns(&self) -> Vec<&str> {
        (0..self.columns.len())
            .filter(|&c| self.is_degenerate(c))
            .map(|c| self.columns[c].as_str())
            .collect()
    }

    /// Scales one value of column `c`; degenerate columns map to 0.
    pub fn apply(&self, c: usize, value: f64) -> f64 {
        if self.is_degenerate(c) {
            0.0
        } else {
            (value - self.mean[c]) / self.spread[c]
        }
    }
}

/// Mean and population spread of one column, with the spread forced to exactly
/// zero when it is indistinguishable from rounding noise.
pub(crate) fn mean_spread(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let spread = var.sqrt();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread <= 1e-12 * scale {
        (mean, 0.0)
    } else {
        (mean, spread)
    }
}

pub fn fit_zscore(table: &DataTable) -> Result<ScalerState, PreprocessError> {
    if table.row_count() == 0 || table.column_count() == 0 {
        return Err(PreprocessError::Schema("cannot fit a scaler on an empty table".into()));
    }
    let mut mean = Vec::with_capacity(table.column_count());
    let mut spread = Vec::with_capacity(table.column_count());
    for c in 0..table.column_count() {
        let (m, s) = mean_spread(&table.dense_column(c)?);
        mean.push(m);
        spread.push(s);
    }
    Ok(ScalerState {
        columns: table.column_names().to_vec(),
        mean,
        spread,
    })
}

pub fn transform_zscore(
    table: &DataTable,
    state: &ScalerState,
) -> Result<DataTable, PreprocessError> {
    if table.column_names() != state.columns.as_slice() {
        return Err(PreprocessError::Schema(format!(
            "scaler columns {:?} do not match table columns {:?}",
            state.columns,
            table.column_names()
        )));
    }
    let columns = table
        .columns()
        .iter()
        .enumerate()
        .map(|(c, col)| col.iter().map(|v| v.map(|x| state.apply(c, x))).collect())
        .collect();
    Ok(table.with_columns(columns))
}

/// Fit on `table` and transform it in one step.
pub fn standardize(table: &DataTable) -> Result<(DataTable, ScalerState), PreprocessError> {
    let state = fit_zscore(table)?;
    let out = transform_zscore(table, &state)?;
    Ok((out, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(name: &str, values: Vec<Option<f64>>) -> DataTable {
        DataTable::new(vec![name.into()], vec![values]).unwrap()
    }

    fn dense(names: &[&str], cols: Vec<Vec<f64>>) -> DataTable {
        DataTable::from_dense(names.iter().map(|s| s.to_string()).collect(), cols).unwrap()
    }

    #[test]
    fn clean_removes_duplicates_keeping_first() {
        let t = dense(&["a", "b"], vec![vec![1.0, 2.0, 1.0], vec![5.0, 6.0, 5.0]]);
        let (out, report) = clean(&t, MissingPolicy::ImputeMean).unwrap();
        assert_eq!(out.row_count(), 2);
        assert_eq!(out.row(0), vec![Some(1.0), Some(5.0)]);
        assert_eq!(out.row(1), vec![Some(2.0), Some(6.0)]);
        assert_eq!(report.duplicates_removed, 1);
    }

    #[test]
    fn clean_identity_on_tidy_table() {
        let t = dense(&["a", "b"], vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let (out, report) = clean(&t, MissingPolicy::ImputeMean).unwrap();
        assert_eq!(out, t);
        assert_eq!(report.duplicates_removed, 0);
        assert_eq!(report.rows_dropped, 0);
        assert_eq!(report.missing_imputed, vec![0, 0]);
    }

    #[test]
    fn clean_missing_policies() {
        let t = col("a", vec![Some(1.0), None, Some(3.0)]);
        let (out, report) = clean(&t, MissingPolicy::ImputeMean).unwrap();
        assert_eq!(out.columns()[0], vec![Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(report.missing_imputed, vec![1]);

        let (out, _) = clean(&t, MissingPolicy::ImputeConstant { value: -7.0 }).unwrap();
        assert_eq!(out.columns()[0], vec![Some(1.0), Some(-7.0), Some(3.0)]);

        let (out, report) = clean(&t, MissingPolicy::DropRow).unwrap();
        assert_eq!(out.columns()[0], vec![Some(1.0), Some(3.0)]);
        assert_eq!(report.rows_dropped, 1);
        assert_eq!(report.rows_dropped + report.output_rows + report.duplicates_removed, 3);
    }

    #[test]
    fn clean_errors() {
        let all_missing = col("a", vec![None, None]);
        assert!(matches!(
            clean(&all_missing, MissingPolicy::ImputeMean),
            Err(PreprocessError::DegenerateColumn(name)) if name == "a"
        ));
        let empty = col("a", vec![]);
        assert!(matches!(clean(&empty, MissingPolicy::DropRow), Err(PreprocessError::EmptyTable)));
    }

    #[test]
    fn fit_zscore_examples() {
        let s = fit_zscore(&dense(&["a"], vec![vec![1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(s.mean[0], 2.0);
        assert!((s.spread[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.spread[0] - 0.81650).abs() < 1e-5);

        let s = fit_zscore(&dense(&["a"], vec![vec![5.0, 5.0, 5.0]])).unwrap();
        assert_eq!((s.mean[0], s.spread[0]), (5.0, 0.0));
        assert_eq!(s.degenerate_columns(), vec!["a"]);

        let s = fit_zscore(&dense(&["a"], vec![vec![-1.0, 1.0]])).unwrap();
        assert_eq!((s.mean[0], s.spread[0]), (0.0, 1.0));

        let s = fit_zscore(&dense(&["a"], vec![vec![0.1, 0.1, 0.1]])).unwrap();
        assert!(s.is_degenerate(0));
    }

    #[test]
    fn transform_examples() {
        let t = dense(&["a", "k"], vec![vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]]);
        let state = fit_zscore(&t).unwrap();
        let out = transform_zscore(&t, &state).unwrap();
        let a = out.dense_column(0).unwrap();
        let z = 1.0 / (2.0f64 / 3.0).sqrt();
        for (got, want) in a.iter().zip([-z, 0.0, z]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((a[2] - 1.2247).abs() < 1e-4);
        assert_eq!(out.dense_column(1).unwrap(), vec![0.0; 3]);

        let fixed = dense(&["a"], vec![vec![-1.0, 1.0, -1.0, 1.0]]);
        let (again, _) = standardize(&fixed).unwrap();
        assert!(again.dense_column(0).unwrap().iter().zip(fixed.dense_column(0).unwrap()).all(|(x, y)| (x - y).abs() < 1e-12));

        let renamed = dense(&["b", "k"], vec![vec![1.0], vec![1.0]]);
        assert!(matches!(transform_zscore(&renamed, &state), Err(PreprocessError::Schema(_))));
    }

    #[test]
    fn standardize_examples() {
        let (out, _) = standardize(&dense(&["a"], vec![vec![2.0, 4.0, 6.0]])).unwrap();
        let v = out.dense_column(0).unwrap();
        assert!((v[0] + 1.2247).abs() < 1e-4 && v[1].abs() < 1e-15 && (v[2] - 1.2247).abs() < 1e-4);
        let empty = dense(&["a"], vec![vec![]]);
        assert!(matches!(standardize(&empty), Err(PreprocessError::Schema(_))));
    }

    fn table_strategy() -> impl Strategy<Value = DataTable> {
        (1usize..4, 2usize..30).prop_flat_map(|(cols, rows)| {
            proptest::collection::vec(
                proptest::collection::vec(prop_oneof![4 => (-50i32..50).prop_map(|v| Some(v as f64 / 4.0)), 1 => Just(None)], rows),
                cols,
            )
            .prop_map(move |columns| {
                let names = (0..cols).map(|c| format!("c{c}")).collect();
                DataTable::new(names, columns).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(t in table_strategy()) {
            if let Ok((once, report)) = clean(&t, MissingPolicy::ImputeMean) {
                prop_assert_eq!(report.rows_dropped + report.output_rows + report.duplicates_removed, report.input_rows);
                let (twice, second) = clean(&once, MissingPolicy::ImputeMean).unwrap();
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(second.duplicates_removed, 0);
            }
            if let Ok((once, _)) = clean(&t, MissingPolicy::DropRow) {
                if once.row_count() > 0 {
                    prop_assert_eq!(clean(&once, MissingPolicy::DropRow).unwrap().0, once);
                }
            }
        }

        #[test]
        fn standardized_columns_are_unit(values in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let t = dense(&["x"], vec![values]);
            let (out, state) = standardize(&t).unwrap();
            if !state.is_degenerate(0) {
                let refit = fit_zscore(&out).unwrap();
                prop_assert!(refit.mean[0].abs() < 1e-12);
                prop_assert!((refit.spread[0] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn row_order_does_not_change_scaler(values in proptest::collection::vec(-100f64..100.0, 2..30), rot in 0usize..30) {
            let mut rotated = values.clone();
            let k = rot % values.len();
            rotated.rotate_left(k);
            let a = fit_zscore(&dense(&["x"], vec![values])).unwrap();
            let b = fit_zscore(&dense(&["x"], vec![rotated])).unwrap();
            prop_assert!((a.mean[0] - b.mean[0]).abs() < 1e-9);
            prop_assert!((a.spread[0] - b.spread[0]).abs() < 1e-9);
        }
    }
}
