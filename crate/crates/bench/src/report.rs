//! CSV and JSON report writers.

use std::io::Write;

use serde::Serialize;

use crate::error::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Header row plus one record per row, RFC 4180 quoting.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut out: W) -> Result<(), BenchError> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// CSV of `rows`, or JSON of `full` when requested.
pub fn emit<R, F, W>(format: Format, rows: &[R], full: &F, out: W) -> Result<(), BenchError>
where
    R: Serialize,
    F: Serialize + ?Sized,
    W: Write,
{
    match format {
        Format::Csv => write_csv(rows, out),
        Format::Json => write_json(full, out),
    }
}
