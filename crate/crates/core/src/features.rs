//! Pearson correlation matrix, greedy relevance/redundancy feature selection,
//! and residual-based outlier flagging on the most correlated feature pair.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{mean_spread, DataTable, PreprocessError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("correlation needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("target feature {0:?} not found")]
    UnknownTarget(String),
    #[error("k = {k} must be in 1..{features}")]
    InvalidK { k: usize, features: usize },
    #[error("outlier threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("table columns {table:?} do not match correlation features {corr:?}")]
    Mismatch {
        table: Vec<String>,
        corr: Vec<String>,
    },
    #[error(transparent)]
    Table(#[from] PreprocessError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Symmetric matrix of Pearson coefficients, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub r: Vec<f64>,
    /// Zero-spread features. Their off-diagonal entries are 0.
    pub degenerate: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.len() + j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Header row of feature names followed by the square body.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in self.r.chunks(self.len().max(1)) {
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn pearson_matrix(table: &DataTable) -> Result<CorrelationMatrix, FeatureError> {
    let n_rows = table.row_count();
    if n_rows < 2 {
        return Err(FeatureError::TooFewRows(n_rows));
    }
    let cols = table.dense_columns()?;
    let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_spread(c)).collect();
    let degenerate: Vec<bool> = stats.iter().map(|&(_, s)| s == 0.0).collect();
    let p = cols.len();
    let mut r = vec![0.0; p * p];
    for i in 0..p {
        if !degenerate[i] {
            r[i * p + i] = 1.0;
        }
        for j in i + 1..p {
            if degenerate[i] || degenerate[j] {
                continue;
            }
            let (mi, si) = stats[i];
            let (mj, sj) = stats[j];
            let cov = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(x, y)| (x - mi) * (y - mj))
                .sum::<f64>()
                / n_rows as f64;
            let v = (cov / (si * sj)).clamp(-1.0, 1.0);
            r[i * p + j] = v;
            r[j * p + i] = v;
        }
    }
    Ok(CorrelationMatrix {
        names: table.column_names().to_vec(),
        r,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub features: Vec<String>,
    /// Set when the redundancy cap left fewer than `k` candidates.
    pub shortfall: bool,
}

/// Greedy selection by descending `|r|` to `target`, skipping candidates whose
/// `|r|` with an already chosen feature exceeds `redundancy_cap`. Ties go to
/// the lexicographically smaller name.
pub fn select_features(
    corr: &CorrelationMatrix,
    target: &str,
    k: usize,
    redundancy_cap: f64,
) -> Result<Selection, FeatureError> {
    let t = corr
        .index_of(target)
        .ok_or_else(|| FeatureError::UnknownTarget(target.to_string()))?;
    if k == 0 || k >= corr.len() {
        return Err(FeatureError::InvalidK {
            k,
            features: corr.len(),
        });
    }
    let mut order: Vec<usize> = (0..corr.len()).filter(|&i| i != t).collect();
    order.sort_by(|&a, &b| {
        corr.get(b, t)
            .abs()
            .partial_cmp(&corr.get(a, t).abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| corr.names[a].cmp(&corr.names[b]))
    });
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for cand in order {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|&s| corr.get(cand, s).abs() <= redundancy_cap) {
            chosen.push(cand);
        }
    }
    Ok(Selection {
        shortfall: chosen.len() < k,
        features: chosen.into_iter().map(|i| corr.names[i].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierScan {
    /// `(regressor, response)` of the most correlated pair, if one exists.
    pub pair: Option<(String, String)>,
    pub rows: Vec<usize>,
    /// No usable (non-degenerate) feature pair was available.
    pub warning: bool,
}

/// Flags rows whose standardized least-squares residual on the most correlated
/// feature pair exceeds `threshold` in absolute value.
pub fn flag_outliers(
    table: &DataTable,
    corr: &CorrelationMatrix,
    threshold: f64,
) -> Result<OutlierScan, FeatureError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(FeatureError::InvalidThreshold(threshold));
    }
    if table.column_names() != corr.names.as_slice() {
        return Err(FeatureError::Mismatch {
            table: table.column_names().to_vec(),
            corr: corr.names.clone(),
        });
    }
    let p = corr.len();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..p {
        for j in i + 1..p {
            if corr.degenerate[i] || corr.degenerate[j] {
                continue;
            }
            let v = corr.get(i, j).abs();
            if best.is_none_or(|(_, _, b)| v > b) {
                best = Some((i, j, v));
            }
        }
    }
    let Some((i, j, _)) = best else {
        return Ok(OutlierScan {
            pair: None,
            rows: Vec::new(),
            warning: true,
        });
    };
    let x = table.dense_column(i)?;
    let y = table.dense_column(j)?;
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(a, b)| b - (intercept + slope * a))
        .collect();
    let spread = (residuals.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rows = if spread <= 1e-12 * scale.max(1.0) {
        Vec::new()
    } else {
        residuals
            .iter()
            .enumerate()
            .filter(|(_, e)| (*e / spread).abs() > threshold)
            .map(|(r, _)| r)
            .collect()
    };
    Ok(OutlierScan {
        pair: Some((corr.names[i].clone(), corr.names[j].clone())),
        rows,
        warning: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(names: &[&str], cols: Vec<Vec<f64>>) -> DataTable {
        DataTable::from_dense(names.iter().map(|s| s.to_string()).collect(), cols).unwrap()
    }

    /// Two-pass textbook Pearson coefficient.
    fn oracle_r(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let dx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let dy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        num / (dx.sqrt() * dy.sqrt())
    }

    #[test]
    fn pearson_examples() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let t = table(&["x", "dbl", "neg"], vec![x.clone(), x.iter().map(|v| 2.0 * v).collect(), x.iter().map(|v| -v).collect()]);
        let c = pearson_matrix(&t).unwrap();
        assert!((c.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((c.get(0, 2) + 1.0).abs() < 1e-12);

        let t = table(&["x", "y"], vec![vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]]);
        let c = pearson_matrix(&t).unwrap();
        assert!((c.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((oracle_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 0.5).abs() < 1e-12);
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn pearson_degenerate_and_errors() {
        let t = table(&["x", "k"], vec![vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]]);
        let c = pearson_matrix(&t).unwrap();
        assert_eq!(c.degenerate, vec![false, true]);
        assert_eq!(c.get(0, 1), 0.0);
        let one = table(&["x"], vec![vec![1.0]]);
        assert!(matches!(pearson_matrix(&one), Err(FeatureError::TooFewRows(1))));
    }

    #[test]
    fn pearson_matches_oracle_on_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..10).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let c = pearson_matrix(&table(&["a", "b", "c", "d", "e"], cols.clone())).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let want = if i == j { 1.0 } else { oracle_r(&cols[i], &cols[j]) };
                    assert!((c.get(i, j) - want).abs() < 1e-12);
                    assert_eq!(c.get(i, j), c.get(j, i));
                }
            }
        }
    }

    fn relevance_matrix(names: &[&str], to_target: &[f64]) -> CorrelationMatrix {
        // last name is the target; candidate/candidate correlations are zero
        let p = names.len();
        let mut r = vec![0.0; p * p];
        for i in 0..p {
            r[i * p + i] = 1.0;
        }
        for (i, &v) in to_target.iter().enumerate() {
            r[i * p + p - 1] = v;
            r[(p - 1) * p + i] = v;
        }
        CorrelationMatrix { names: names.iter().map(|s| s.to_string()).collect(), r, degenerate: vec![false; p] }
    }

    #[test]
    fn select_all_sorted_by_relevance() {
        let c = relevance_matrix(&["b", "a", "c", "y"], &[0.3, -0.3, 0.8]);
        let s = select_features(&c, "y", 3, 1.0).unwrap();
        assert_eq!(s.features, vec!["c", "a", "b"]);
        assert!(!s.shortfall);
    }

    #[test]
    fn select_top_two_matches_subset_enumeration() {
        let rel = [0.9, 0.5, 0.1];
        let c = relevance_matrix(&["f0", "f1", "f2", "y"], &rel);
        let s = select_features(&c, "y", 2, 1.0).unwrap();
        // brute force over all 2-subsets maximizing summed |r|
        let mut best = (0.0, vec![]);
        for i in 0..3 {
            for j in i + 1..3 {
                let score = rel[i].abs() + rel[j].abs();
                if score > best.0 {
                    best = (score, vec![format!("f{i}"), format!("f{j}")]);
                }
            }
        }
        assert_eq!(s.features, best.1);
    }

    #[test]
    fn redundancy_cap_excludes_duplicate() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let t = table(
            &["x", "x_copy", "z", "y"],
            vec![x.clone(), x.clone(), vec![1.0, -1.0, 1.0, -1.0, 2.0], vec![1.1, 2.0, 2.9, 4.2, 5.0]],
        );
        let c = pearson_matrix(&t).unwrap();
        let s = select_features(&c, "y", 2, 0.95).unwrap();
        assert_eq!(s.features, vec!["x", "z"]);
        let s = select_features(&c, "y", 3, 0.95).unwrap();
        assert!(s.shortfall);
        assert_eq!(s.features.len(), 2);
        assert!(matches!(select_features(&c, "nope", 1, 0.95), Err(FeatureError::UnknownTarget(_))));
        assert!(matches!(select_features(&c, "y", 4, 0.95), Err(FeatureError::InvalidK { .. })));
        assert_eq!(select_features(&c, "y", 2, 0.95).unwrap(), s_again(&c));
    }

    fn s_again(c: &CorrelationMatrix) -> Selection {
        select_features(c, "y", 2, 0.95).unwrap()
    }

    #[test]
    fn outliers_perfect_line_is_clean() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let t = table(&["x", "y"], vec![x.clone(), x.iter().map(|v| 3.0 * v - 2.0).collect()]);
        let c = pearson_matrix(&t).unwrap();
        let scan = flag_outliers(&t, &c, 3.0).unwrap();
        assert!(scan.rows.is_empty());
        assert!(!scan.warning);
        assert!(flag_outliers(&t, &c, f64::INFINITY).unwrap().rows.is_empty());
        assert!(flag_outliers(&t, &c, 0.0).is_err());
    }

    #[test]
    fn outliers_planted_point() {
        let n = 50;
        let x: Vec<f64> = (0..n).map(f64::from).collect();
        // unit alternating noise around y = 2x + 1, one point 10 units off
        let mut y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 2.0 * v + 1.0 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        y[17] += 10.0;
        let t = table(&["x", "y"], vec![x.clone(), y.clone()]);
        let c = pearson_matrix(&t).unwrap();
        let scan = flag_outliers(&t, &c, 3.0).unwrap();
        assert_eq!(scan.rows, vec![17]);

        // closed-form least squares oracle
        let nf = n as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
        let icpt = (sy - slope * sx) / nf;
        let res: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - icpt - slope * a).collect();
        let sd = (res.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
        let flagged: Vec<usize> = (0..n as usize).filter(|&i| (res[i] / sd).abs() > 3.0).collect();
        assert_eq!(flagged, scan.rows);
    }

    #[test]
    fn outliers_all_degenerate_warns() {
        let t = table(&["a", "b"], vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]);
        let c = pearson_matrix(&t).unwrap();
        let scan = flag_outliers(&t, &c, 3.0).unwrap();
        assert!(scan.warning && scan.rows.is_empty());
    }

    #[test]
    fn csv_export_is_square() {
        let t = table(&["x", "y"], vec![vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]]);
        let c = pearson_matrix(&t).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y\n1,0.5\n0.5,1\n");
    }
}
