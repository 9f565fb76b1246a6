//! Dataset CSV format.
//!
//! Header row required. Columns `time` (nonnegative decimal) and `event`
//! (0/1) are mandatory; every other column is a covariate, and the column
//! order defines the dataset's local feature order. UTF-8, LF or CRLF.
//! Values are written with Rust's shortest round-trip float formatting, so
//! save → load reproduces every f64 bit-exactly.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::survival::SurvivalDataset;

const TIME_COLUMN: &str = "time";
const EVENT_COLUMN: &str = "event";

pub fn load_dataset(path: &Path) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| map_csv_open_error(path, e))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("cannot read header: {e}")))?
        .clone();
    let mut time_col = None;
    let mut event_col = None;
    let mut feature_cols: Vec<(usize, String)> = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        match name {
            TIME_COLUMN => time_col = Some(i),
            EVENT_COLUMN => event_col = Some(i),
            other => feature_cols.push((i, other.to_string())),
        }
    }
    let time_col = time_col.ok_or_else(|| Error::MissingColumn(TIME_COLUMN.into()))?;
    let event_col = event_col.ok_or_else(|| Error::MissingColumn(EVENT_COLUMN.into()))?;

    let mut raw = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        // Rows are 1-based in error messages, counting the header as row 0.
        let row = row_index + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;

        let cell = |col: usize, name: &str| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing cell".into(),
            })
        };
        let parse_f64 = |col: usize, name: &str| -> Result<f64> {
            let text = cell(col, name)?;
            text.trim().parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("not a number: `{text}`"),
            })
        };

        let t = parse_f64(time_col, TIME_COLUMN)?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Parse {
                row,
                column: TIME_COLUMN.into(),
                message: format!("time must be finite and nonnegative, got {t}"),
            });
        }
        time.push(t);

        let e = cell(event_col, EVENT_COLUMN)?.trim();
        match e {
            "0" => event.push(false),
            "1" => event.push(true),
            other => {
                return Err(Error::Parse {
                    row,
                    column: EVENT_COLUMN.into(),
                    message: format!("event must be 0 or 1, got `{other}`"),
                })
            }
        }

        for (col, name) in &feature_cols {
            raw.push(parse_f64(*col, name)?);
        }
    }

    let n = time.len();
    let p = feature_cols.len();
    let covariates = Array2::from_shape_vec((n, p), raw)
        .map_err(|e| Error::invalid(format!("ragged csv: {e}")))?;
    SurvivalDataset::new(
        feature_cols.into_iter().map(|(_, name)| name).collect(),
        covariates,
        time,
        event,
    )
}

pub fn save_dataset(dataset: &SurvivalDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(TIME_COLUMN);
    out.push(',');
    out.push_str(EVENT_COLUMN);
    for name in dataset.feature_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..dataset.n_subjects() {
        out.push_str(&format!(
            "{},{}",
            dataset.time()[i],
            u8::from(dataset.event()[i])
        ));
        for j in 0..dataset.n_features() {
            out.push_str(&format!(",{}", dataset.covariates()[[i, j]]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn map_csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::input_io(path.display().to_string(), io),
        other => Error::invalid(format!("cannot open {}: {other:?}", path.display())),
    }
}
