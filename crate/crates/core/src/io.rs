//! CSV and JSON serialization for run outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Writes a single-header CSV of real rows.
pub fn write_real_csv<P, R>(path: P, header: &[&str], rows: R) -> Result<()>
where
    P: AsRef<Path>,
    R: IntoIterator,
    R::Item: AsRef<[f64]>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|&x| fmt_real(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV whose rows are pre-formatted fields.
pub fn write_csv<P, R, S>(path: P, header: &[&str], rows: R) -> Result<()>
where
    P: AsRef<Path>,
    R: IntoIterator<Item = Vec<S>>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
