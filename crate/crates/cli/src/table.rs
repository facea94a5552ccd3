//! Delimited numeric tables.

use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::CliError;

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            // row numbers count the header as line 1
            let line = i + 2;
            let rec = rec.map_err(|e| CliError::input(format!("{} line {line}: {e}", path.display())))?;
            let row = rec
                .iter()
                .zip(&header)
                .map(|(field, col)| {
                    field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        CliError::input(format!(
                            "{} line {line}, column '{col}': '{field}' is not a finite number",
                            path.display()
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CliError::input(format!("{} has no data rows", path.display())));
        }
        Ok(Self { header, rows })
    }

    /// Index of a column given by name, or by zero-based index when no column
    /// carries that name.
    pub fn column_index(&self, key: &str) -> Result<usize, CliError> {
        if let Some(j) = self.header.iter().position(|h| h == key) {
            return Ok(j);
        }
        match key.parse::<usize>() {
            Ok(j) if j < self.header.len() => Ok(j),
            _ => Err(CliError::input(format!(
                "column '{key}' not found (columns: {})",
                self.header.join(", ")
            ))),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn select(&self, cols: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((self.rows.len(), cols.len()), |(i, k)| self.rows[i][cols[k]])
    }
}

/// Serializes rows to CSV text. Floats use the shortest round-trip form.
pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
