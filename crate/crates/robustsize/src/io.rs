//! Headerless CSV matrices. Values are written with 17 significant digits so
//! that a written matrix parses back to identical bits.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: cannot parse {f:?}", i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map(Vec::len).ok_or_else(|| Error::Parse("empty matrix".into()))?;
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("rows have different lengths".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_matrix(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// A single row or a single column.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    match m.shape() {
        (1, c) => Ok(DVector::from_iterator(c, m.iter().copied())),
        (r, 1) => Ok(DVector::from_iterator(r, m.iter().copied())),
        (r, c) => Err(Error::Dimension(format!("{}: expected a vector, got {r}x{c}", path.display()))),
    }
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_rows<I, R>(rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in rows {
        let fields: Vec<String> = row.into_iter().map(format_value).collect();
        w.write_record(&fields).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("ascii output")
}

pub fn format_matrix(m: &DMatrix<f64>) -> String {
    format_rows(m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}
