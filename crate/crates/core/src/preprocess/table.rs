use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use super::PreprocessError;

/// Named-column table of optional `f64` cells (`None` marks a missing value).
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    column_names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
    row_count: usize,
}

impl DataTable {
    pub fn new(
        column_names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, PreprocessError> {
        if column_names.len() != columns.len() {
            return Err(PreprocessError::Schema(format!(
                "{} names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = column_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(PreprocessError::Schema(format!("duplicate column name {dup:?}")));
        }
        let row_count = columns.first().map_or(0, Vec::len);
        if let Some((i, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != row_count) {
            return Err(PreprocessError::Schema(format!(
                "column {:?} has {} rows, expected {row_count}",
                column_names[i],
                columns[i].len()
            )));
        }
        for (name, col) in column_names.iter().zip(&columns) {
            if let Some(row) = col.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
                return Err(PreprocessError::NonFinite {
                    column: name.clone(),
                    row,
                });
            }
        }
        Ok(Self {
            column_names,
            columns,
            row_count,
        })
    }

    /// Table without missing cells.
    pub fn from_dense(
        column_names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, PreprocessError> {
        let columns = columns
            .into_iter()
            .map(|c| c.into_iter().map(Some).collect())
            .collect();
        Self::new(column_names, columns)
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|n| n == name)
    }

    pub fn row(&self, r: usize) -> Vec<Option<f64>> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Column `c` as plain values; fails if any cell is missing.
    pub fn dense_column(&self, c: usize) -> Result<Vec<f64>, PreprocessError> {
        self.columns[c]
            .iter()
            .enumerate()
            .map(|(row, v)| {
                v.ok_or_else(|| PreprocessError::Missing {
                    column: self.column_names[c].clone(),
                    row,
                })
            })
            .collect()
    }

    pub fn dense_columns(&self) -> Result<Vec<Vec<f64>>, PreprocessError> {
        (0..self.column_count()).map(|c| self.dense_column(c)).collect()
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        Self {
            column_names: self.column_names.clone(),
            columns,
            row_count: rows.len(),
        }
    }

    pub(crate) fn with_columns(&self, columns: Vec<Vec<Option<f64>>>) -> Self {
        let row_count = columns.first().map_or(0, Vec::len);
        Self {
            column_names: self.column_names.clone(),
            columns,
            row_count,
        }
    }

    /// Parses CSV: header row first, empty fields are missing.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PreprocessError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (c, field) in record.iter().enumerate() {
                let field = field.trim();
                let value = if field.is_empty() {
                    None
                } else {
                    let v: f64 = field.parse().map_err(|_| PreprocessError::Parse {
                        row,
                        column: names[c].clone(),
                        field: field.to_string(),
                    })?;
                    Some(v)
                };
                columns[c].push(value);
            }
        }
        Self::new(names, columns)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, PreprocessError> {
        let file = std::fs::File::open(path).map_err(|e| PreprocessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PreprocessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names)?;
        for r in 0..self.row_count {
            w.write_record(self.columns.iter().map(|c| c[r].map(|v| v.to_string()).unwrap_or_default()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, PreprocessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_missing_cells() {
        let text = "a,b\n1,\n,2.5\n-3e-2,4\n";
        let t = DataTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.row_count(), 3);
        assert_eq!(t.columns()[0], vec![Some(1.0), None, Some(-0.03)]);
        assert_eq!(t.missing_count(), 2);
        let back = DataTable::read_csv(t.to_csv_string().unwrap().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            DataTable::read_csv("a,b\n1,x\n".as_bytes()),
            Err(PreprocessError::Parse { row: 0, .. })
        ));
        assert!(matches!(
            DataTable::read_csv("a,a\n1,2\n".as_bytes()),
            Err(PreprocessError::Schema(_))
        ));
        assert!(matches!(
            DataTable::read_csv("a\nNaN\n".as_bytes()),
            Err(PreprocessError::NonFinite { .. })
        ));
        assert!(DataTable::read_csv("a,b\n1\n".as_bytes()).is_err());
    }
}
