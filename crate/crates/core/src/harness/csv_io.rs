//! CSV schema: a header row naming `y`, `x1..x{d_x}`, `w1..w{d_w}` (any
//! order) and optionally `time`; one observation per line; decimal point
//! numbers only. Row numbers in errors are file line numbers.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{ModelSpec, Series};

const TIME_COLUMN: &str = "time";

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn header_error(message: String) -> Error {
    Error::Ingestion {
        row: 1,
        column: "header".into(),
        message,
    }
}

/// Maps required column names to their positions, rejecting missing,
/// duplicated or unexpected columns.
fn locate(headers: &csv::StringRecord, required: &[String]) -> Result<(Vec<usize>, Option<usize>)> {
    let names: Vec<&str> = headers.iter().collect();
    let mut time = None;
    for (pos, name) in names.iter().enumerate() {
        if names[..pos].contains(name) {
            return Err(header_error(format!("duplicate column {name:?}")));
        }
        if *name == TIME_COLUMN {
            time = Some(pos);
        } else if !required.iter().any(|r| r == name) {
            return Err(header_error(format!(
                "unexpected column {name:?}; expected {}",
                required.join(",")
            )));
        }
    }
    let positions = required
        .iter()
        .map(|r| {
            names
                .iter()
                .position(|n| n == r)
                .ok_or_else(|| header_error(format!("missing column {r:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((positions, time))
}

fn parse_cell(record: &csv::StringRecord, pos: usize, column: &str, line: usize) -> Result<f64> {
    let raw = record.get(pos).unwrap_or("");
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Ingestion {
            row: line,
            column: column.to_string(),
            message: format!("non-finite value {v}"),
        }),
        Err(_) => Err(Error::Ingestion {
            row: line,
            column: column.to_string(),
            message: format!("cannot parse {raw:?} as a number"),
        }),
    }
}

fn series_columns(d_x: usize, d_w: usize) -> Vec<String> {
    std::iter::once("y".to_string())
        .chain((1..=d_x).map(|k| format!("x{k}")))
        .chain((1..=d_w).map(|k| format!("w{k}")))
        .collect()
}

/// Reads a series whose columns must match the model dimensions.
pub fn read_series<R: Read>(input: R, spec: &ModelSpec) -> Result<Series> {
    let mut rdr = reader(input);
    let required = series_columns(spec.d_x, spec.d_w);
    let (positions, time_pos) = locate(rdr.headers()?, &required)?;
    let mut y = Vec::new();
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut stamps = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut values = Vec::with_capacity(required.len());
        for (col, pos) in required.iter().zip(&positions) {
            values.push(parse_cell(&record, *pos, col, line)?);
        }
        y.push(values[0]);
        xs.extend_from_slice(&values[1..1 + spec.d_x]);
        ws.extend_from_slice(&values[1 + spec.d_x..]);
        if let Some(tp) = time_pos {
            stamps.push(record.get(tp).unwrap_or("").to_string());
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, spec.d_x, &xs);
    let w = DMatrix::from_row_slice(n, spec.d_w, &ws);
    let mut series = Series::new(y, x, w)?;
    if time_pos.is_some() {
        series.timestamps = Some(stamps);
    }
    Ok(series)
}

pub fn read_series_csv(path: &Path, spec: &ModelSpec) -> Result<Series> {
    read_series(std::fs::File::open(path)?, spec)
}

/// Writes a series in the schema above, with full round-trip precision.
pub fn write_series<W: Write>(out: W, series: &Series) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(out);
    let mut header = series_columns(series.d_x(), series.d_w());
    if series.timestamps.is_some() {
        header.push(TIME_COLUMN.into());
    }
    wtr.write_record(&header)?;
    for i in 0..series.len() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(format!("{:?}", series.y[i]));
        row.extend(series.x.row(i).iter().map(|v| format!("{v:?}")));
        row.extend(series.w.row(i).iter().map(|v| format!("{v:?}")));
        if let Some(ts) = &series.timestamps {
            row.push(ts[i].clone());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_series_csv(path: &Path, series: &Series) -> Result<()> {
    write_series(std::fs::File::create(path)?, series)
}

/// Reads an observed AR path: columns `r` and `w1..w{d_w}`.
pub fn read_ar<R: Read>(input: R, d_w: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut rdr = reader(input);
    let required: Vec<String> = std::iter::once("r".to_string())
        .chain((1..=d_w).map(|k| format!("w{k}")))
        .collect();
    let (positions, _) = locate(rdr.headers()?, &required)?;
    let mut r = Vec::new();
    let mut ws = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        r.push(parse_cell(&record, positions[0], "r", line)?);
        for (col, pos) in required.iter().zip(&positions).skip(1) {
            ws.push(parse_cell(&record, *pos, col, line)?);
        }
    }
    let n = r.len();
    Ok((r, DMatrix::from_row_slice(n, d_w, &ws)))
}

pub fn read_ar_csv(path: &Path, d_w: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    read_ar(std::fs::File::open(path)?, d_w)
}

/// Writes an observed AR path in the `r, w1..` schema.
pub fn write_ar<W: Write>(out: W, r: &[f64], w: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(out);
    let header: Vec<String> = std::iter::once("r".to_string())
        .chain((1..=w.ncols()).map(|k| format!("w{k}")))
        .collect();
    wtr.write_record(&header)?;
    for (i, ri) in r.iter().enumerate() {
        let mut row = vec![format!("{ri:?}")];
        row.extend(w.row(i).iter().map(|v| format!("{v:?}")));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
