use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CorrelationMatrix, MatrixPanel, ReturnPanel};
use crate::error::{Error, Result};
use crate::fsio::{read_json, write_atomic, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Cells already hold log-returns.
    #[default]
    Returns,
    /// Cells hold prices; returns are `ln(P_t / P_{t-1})`.
    Prices,
}

/// How to read a return CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub kind: InputKind,
    /// Column holding month labels. When absent from the header the
    /// months are numbered `t0000`, `t0001`, ...
    pub date_column: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            kind: InputKind::Returns,
            date_column: Some("date".to_string()),
        }
    }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Parse a header-plus-rows CSV of monthly observations into a return panel.
pub fn load_returns_csv(path: &Path, schema: &CsvSchema) -> Result<ReturnPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => csv_err(path, e),
        })?;
    let header: Vec<String> = reader.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    let date_idx = schema
        .date_column
        .as_ref()
        .and_then(|name| header.iter().position(|h| h.eq_ignore_ascii_case(name)));
    let asset_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != date_idx).collect();
    let asset_ids: Vec<String> = asset_cols.iter().map(|&c| header[c].clone()).collect();

    let mut timestamps = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        timestamps.push(match date_idx {
            Some(c) => record[c].to_string(),
            None => format!("t{row:04}"),
        });
        for (col, &c) in asset_cols.iter().enumerate() {
            let cell = &record[c];
            if cell.is_empty() {
                return Err(Error::MissingValue { row, col });
            }
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                col,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    col,
                    value: cell.to_string(),
                });
            }
            data.push(value);
        }
    }
    let m = asset_ids.len();
    let t = timestamps.len();
    let mut values = DMatrix::from_row_slice(t, m, &data);

    if schema.kind == InputKind::Prices {
        if t < 2 {
            return Err(Error::invalid("price input needs at least two rows"));
        }
        if let Some(pos) = values.iter().position(|p| *p <= 0.0) {
            return Err(Error::NonNumeric {
                row: pos % t,
                col: pos / t,
                value: values[pos].to_string(),
            });
        }
        values = DMatrix::from_fn(t - 1, m, |i, j| (values[(i + 1, j)] / values[(i, j)]).ln());
        timestamps.remove(0);
    }
    ReturnPanel::new(asset_ids, timestamps, values)
}

/// Write a return panel as `date,<asset ids...>` rows readable by [`load_returns_csv`].
pub fn write_returns_csv(path: &Path, panel: &ReturnPanel) -> Result<()> {
    let mut out = String::from("date,");
    out.push_str(&panel.asset_ids().join(","));
    out.push('\n');
    for (t, date) in panel.timestamps().iter().enumerate() {
        out.push_str(date);
        for v in panel.values().row(t).iter() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Header row of labels followed by the M rows of the matrix.
pub fn write_matrix_csv(path: &Path, m: &CorrelationMatrix) -> Result<()> {
    write_atomic(path, matrix_csv_text(m.labels(), m.entries()).as_bytes())
}

pub(crate) fn matrix_csv_text(labels: &[String], a: &DMatrix<f64>) -> String {
    let mut out = labels.join(",");
    out.push('\n');
    for row in a.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Read a square matrix CSV written by [`write_matrix_csv`], without validating it.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let labels: Vec<String> = lines
        .next()
        .ok_or_else(|| csv_err(path, "empty matrix file"))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let m = labels.len();
    let mut data = Vec::with_capacity(m * m);
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != m {
            return Err(Error::RaggedRow {
                row,
                expected: m,
                found: cells.len(),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::MissingValue { row, col });
            }
            data.push(cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                row,
                col,
                value: cell.to_string(),
            })?);
        }
    }
    if data.len() != m * m {
        return Err(Error::Shape(format!(
            "{} has {} rows for {m} labels",
            path.display(),
            data.len() / m.max(1)
        )));
    }
    Ok((labels, DMatrix::from_row_slice(m, m, &data)))
}

/// JSON manifest stored next to a panel's matrix files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub labels: Vec<String>,
    pub window: usize,
    pub stride: usize,
    pub dates: Vec<String>,
    pub files: Vec<String>,
}

pub fn save_panel(dir: &Path, panel: &MatrixPanel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: Vec<String> = (0..panel.len()).map(|k| format!("matrix_{k:04}.csv")).collect();
    for (m, f) in panel.matrices.iter().zip(&files) {
        write_matrix_csv(&dir.join(f), m)?;
    }
    let manifest = PanelManifest {
        labels: panel.labels().to_vec(),
        window: panel.window,
        stride: panel.stride,
        dates: panel.dates.clone(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn load_panel(dir: &Path) -> Result<MatrixPanel> {
    let manifest: PanelManifest = read_json(&dir.join("manifest.json"))?;
    let mut matrices = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let path: PathBuf = dir.join(f);
        let (labels, a) = read_matrix_csv(&path)?;
        if labels != manifest.labels {
            return Err(Error::Shape(format!("{} labels differ from the manifest", path.display())));
        }
        matrices.push(CorrelationMatrix::new(labels, a)?);
    }
    MatrixPanel::new(matrices, manifest.window, manifest.stride, manifest.dates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn returns_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = crate::corrdata::SyntheticMarketConfig::regime_switching(4, 30);
        let panel = crate::corrdata::generate_synthetic_market(&cfg, 2).unwrap();
        let path = dir.path().join("r.csv");
        write_returns_csv(&path, &panel).unwrap();
        let back = load_returns_csv(&path, &CsvSchema::default()).unwrap();
        assert_eq!(back, panel);
    }

    #[test]
    fn loads_shape_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("date,A,B,C\n");
        for t in 0..120 {
            writeln!(text, "m{t},{},{},{}", 0.01 * t as f64, -0.002 * t as f64, (t as f64).sin() * 0.03).unwrap();
        }
        let p = write(dir.path(), "r.csv", &text);
        let panel = load_returns_csv(&p, &CsvSchema::default()).unwrap();
        assert_eq!((panel.months(), panel.assets()), (120, 3));
        assert_eq!(panel.asset_ids(), ["A", "B", "C"]);
        assert_eq!(panel.timestamps()[5], "m5");
    }

    #[test]
    fn blank_cell_is_missing_value() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "A,B\n0.1,0.2\n0.3,\n");
        let err = load_returns_csv(&p, &CsvSchema::default()).unwrap_err();
        assert_eq!(err.to_string(), "missing value at (1, 1)");
    }

    #[test]
    fn contract_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = write(dir.path(), "a.csv", "A,B\n0.1,0.2\n0.3\n");
        assert!(matches!(
            load_returns_csv(&ragged, &CsvSchema::default()),
            Err(Error::RaggedRow { .. })
        ));
        let text = write(dir.path(), "b.csv", "A,B\n0.1,x\n");
        assert!(matches!(
            load_returns_csv(&text, &CsvSchema::default()),
            Err(Error::NonNumeric { .. })
        ));
        let dup = write(dir.path(), "c.csv", "A,A\n0.1,0.2\n");
        assert!(matches!(
            load_returns_csv(&dup, &CsvSchema::default()),
            Err(Error::DuplicateAsset(_))
        ));
        let missing = dir.path().join("nope.csv");
        assert!(matches!(load_returns_csv(&missing, &CsvSchema::default()), Err(Error::Io { .. })));
    }

    #[test]
    fn prices_become_log_returns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "date,A,B\n2000-01,100,50\n2000-02,110,50\n2000-03,99,55\n");
        let schema = CsvSchema {
            kind: InputKind::Prices,
            ..CsvSchema::default()
        };
        let panel = load_returns_csv(&p, &schema).unwrap();
        assert_eq!(panel.months(), 2);
        assert_eq!(panel.timestamps(), ["2000-02", "2000-03"]);
        assert!((panel.values()[(0, 0)] - (1.1f64).ln()).abs() < 1e-15);
        assert!((panel.values()[(1, 1)] - (1.1f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn panel_directory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.1 / 3.0, -0.25, 0.1 / 3.0, 1.0, 0.7, -0.25, 0.7, 1.0]);
        let m = CorrelationMatrix::unlabeled(a).unwrap();
        let panel = MatrixPanel::new(vec![m.clone(), m], 100, 1, vec!["d1".into(), "d2".into()]).unwrap();
        save_panel(dir.path(), &panel).unwrap();
        let back = load_panel(dir.path()).unwrap();
        assert_eq!(back, panel);
    }
}
