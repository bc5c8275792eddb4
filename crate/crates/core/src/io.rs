//! Dataset and report files.
//!
//! Datasets are JSON `{"dim": d, "matrices": [[row-major entries], ...]}` or
//! CSV with a first record `dim=d` followed by one matrix per record, row
//! major. Reports are pretty-printed JSON; tables are RFC-4180 CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::experiments::{ExperimentReport, ProjectionRow};
use crate::geodesic::row_major;
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// `.csv` files are CSV; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    dim: usize,
    matrices: Vec<Vec<f64>>,
}

fn entries_to_matrix(dim: usize, index: usize, entries: &[f64]) -> Result<Mat> {
    if entries.len() != dim * dim {
        return Err(GpcaError::InvalidMatrix {
            index,
            source: Box::new(GpcaError::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            }),
        });
    }
    Ok(Mat::from_row_slice(dim, dim, entries))
}

pub fn parse_dataset_json(text: &str) -> Result<GaussianDataset> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| GpcaError::Parse {
        line: e.line(),
        field: e.column(),
        message: e.to_string(),
    })?;
    if file.dim == 0 {
        return Err(GpcaError::InvalidDataset("dim must be positive".into()));
    }
    let raw = file
        .matrices
        .iter()
        .enumerate()
        .map(|(i, m)| entries_to_matrix(file.dim, i, m))
        .collect::<Result<Vec<_>>>()?;
    GaussianDataset::from_matrices(raw)
}

pub fn parse_dataset_csv(text: &str) -> Result<GaussianDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(GpcaError::Parse {
                line: 1,
                field: 1,
                message: "empty file, expected header dim=d".into(),
            })
        }
    };
    let header_line = line_of(&header);
    let dim = header
        .get(0)
        .and_then(|h| h.strip_prefix("dim="))
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0 && header.len() == 1)
        .ok_or_else(|| GpcaError::Parse {
            line: header_line,
            field: 1,
            message: format!("expected header dim=d, found {:?}", header.iter().collect::<Vec<_>>()),
        })?;
    let mut raw = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != dim * dim {
            return Err(GpcaError::Parse {
                line,
                field: record.len().min(dim * dim) + 1,
                message: format!("expected {} entries, found {}", dim * dim, record.len()),
            });
        }
        let entries = record
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| GpcaError::Parse {
                        line,
                        field: j + 1,
                        message: format!("not a finite number: {s:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        raw.push(Mat::from_row_slice(dim, dim, &entries));
    }
    GaussianDataset::from_matrices(raw)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(e: csv::Error) -> GpcaError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    GpcaError::Parse {
        line,
        field: 0,
        message: e.to_string(),
    }
}

pub fn dataset_to_json(dataset: &GaussianDataset) -> String {
    let file = DatasetFile {
        dim: dataset.dim(),
        matrices: dataset.matrices().iter().map(|m| row_major(m.matrix())).collect(),
    };
    serde_json::to_string_pretty(&file).expect("dataset serializes")
}

pub fn dataset_to_csv(dataset: &GaussianDataset) -> Result<String> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record([format!("dim={}", dataset.dim())]).map_err(csv_error)?;
    for m in dataset.matrices() {
        // `{:?}` prints the shortest representation that parses back exactly
        w.write_record(row_major(m.matrix()).iter().map(|v| format!("{v:?}")))
            .map_err(csv_error)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| GpcaError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| GpcaError::Io(e.to_string()))
}

pub fn load_dataset(path: &Path) -> Result<GaussianDataset> {
    let text = fs::read_to_string(path)?;
    match Format::from_path(path) {
        Format::Json => parse_dataset_json(&text),
        Format::Csv => parse_dataset_csv(&text),
    }
}

pub fn save_dataset(dataset: &GaussianDataset, path: &Path) -> Result<()> {
    let text = match Format::from_path(path) {
        Format::Json => dataset_to_json(dataset),
        Format::Csv => dataset_to_csv(dataset)?,
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn report_to_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn save_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    fs::write(path, report_to_json(report))?;
    Ok(())
}

/// CSV of flat rows, with a header taken from the field names.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    finish(w)
}

/// Per-datum projection table: TPCA score and time, one time column per GPCA
/// component, and cone coordinates when `d = 2`.
pub fn projections_to_csv(rows: &[ProjectionRow]) -> Result<String> {
    let k = rows.first().map_or(0, |r| r.gpca_times.len());
    let cone = rows.first().is_some_and(|r| r.cone.is_some());
    let mut header = vec!["index".to_string(), "tpca_score".into(), "tpca_time".into()];
    header.extend((1..=k).map(|j| format!("gpca_time_{j}")));
    if cone {
        header.extend(["cone_x".into(), "cone_y".into(), "cone_z".into()]);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![r.index.to_string(), r.tpca_score.to_string(), r.tpca_time.to_string()];
        rec.extend(r.gpca_times.iter().map(f64::to_string));
        if let Some(c) = &r.cone {
            rec.extend([c.x.to_string(), c.y.to_string(), c.z.to_string()]);
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    finish(w)
}
