//! File formats: matrices as headerless integer CSV, index vectors one value
//! per line, everything else as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Matrix, Symbol};

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_error(path, e))
}

pub fn write_matrix_to<W: Write>(out: W, m: &Matrix) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for row in m.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()
}

/// Parses a headerless CSV of symbols; every record must have the same
/// length. `columns` fixes the width of an empty matrix.
pub fn read_matrix_from<R: std::io::Read>(input: R, columns: Option<usize>) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut data: Vec<Symbol> = Vec::new();
    let mut width = columns;
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidArgument(e.to_string()))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::ShapeMismatch(format!(
                "row {} has {} entries, expected {}",
                i + 1,
                record.len(),
                width.unwrap_or(0)
            )));
        }
        for field in &record {
            data.push(field.parse().map_err(|_| {
                Error::InvalidArgument(format!("row {}: {field:?} is not a symbol", i + 1))
            })?);
        }
        rows += 1;
    }
    Matrix::new(rows, width.unwrap_or(0), data)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_matrix_to(create(path)?, m).map_err(|e| io_error(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    read_matrix_from(open(path)?, None).map_err(|e| io_error(path, e))
}

/// One value per line.
pub fn write_indices(path: &Path, values: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    for v in values {
        writeln!(w, "{v}").map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| io_error(path, format!("{t:?} is not a non-negative integer")))
        })
        .collect()
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_error(path, e))?;
    writeln!(w).map_err(|e| io_error(path, e))?;
    w.flush().map_err(|e| io_error(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = Matrix::from_rows(&[[0u8, 1, 2], [4, 3, 0]]).unwrap();
        let mut buf = Vec::new();
        write_matrix_to(&mut buf, &m).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0,1,2\n4,3,0\n");
        assert_eq!(read_matrix_from(&buf[..], None).unwrap(), m);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = read_matrix_from(&b"0,1\n1\n"[..], None).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
        assert!(read_matrix_from(&b"0,x\n"[..], None).is_err());
        assert!(read_matrix_from(&b"0,300\n"[..], None).is_err());
    }

    #[test]
    fn empty_matrix_keeps_width() {
        let m = read_matrix_from(&b""[..], Some(4)).unwrap();
        assert_eq!((m.rows(), m.cols()), (0, 4));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_matrix(Path::new("/nonexistent/x.csv")).unwrap_err();
        assert!(err.to_string().starts_with("/nonexistent/x.csv:"));
    }
}
