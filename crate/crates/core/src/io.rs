//! CSV conventions shared by datasets, masks, imputed matrices and reports.
//!
//! One header row, comma separated, LF line endings, numbers in plain decimal
//! notation using the shortest representation that round-trips (at most 17
//! significant digits). A missing cell is an empty field.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, Terminator, WriterBuilder};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Labeled matrix as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: Array2<f64>,
}

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Display never switches to exponent notation for f64.
        format!("{v}")
    }
}

pub fn write_table<W: Write>(out: W, headers: &[String], values: &Array2<f64>) -> Result<()> {
    if headers.len() != values.ncols() {
        return Err(Error::ShapeMismatch {
            expected: (values.nrows(), headers.len()),
            found: values.dim(),
        });
    }
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(headers)?;
    let mut record = Vec::with_capacity(values.ncols());
    for row in values.rows() {
        record.clear();
        record.extend(row.iter().map(|&v| format_value(v)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut r = ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                rec.len(),
                headers.len()
            )));
        }
        for field in rec.iter() {
            let field = field.trim();
            if field.is_empty() {
                data.push(f64::NAN);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: `{field}` is not a number", i + 1)))?;
                if !v.is_finite() {
                    return Err(Error::Parse(format!("row {}: non-finite value", i + 1)));
                }
                data.push(v);
            }
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, headers.len()), data)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Table { headers, values })
}

pub fn write_table_file(path: &Path, headers: &[String], values: &Array2<f64>) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    write_table(f, headers, values)
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    read_table(BufReader::new(File::open(path)?))
}
