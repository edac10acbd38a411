//! Matrix Market reader and writer.
//!
//! Supported: `coordinate` with `real`, `integer` or `pattern` fields and
//! `general` or `symmetric` symmetry, and `array` with `real` or `integer`
//! fields in `general` symmetry. Indices are 1-based on disk. Dense matrices
//! are written in `array` format and sparse ones in `coordinate` format;
//! values use the shortest representation that parses back to the same
//! `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{Storage, TallMatrix};

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from {tok:?}")))
}

pub fn read_matrix_market<R: Read>(reader: R) -> Result<TallMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lineno, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let banner = banner?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(lineno, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let layout = match words[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(lineno, format!("unsupported format {other:?}"))),
    };
    let field = match words[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" if layout == Layout::Coordinate => Field::Pattern,
        other => return Err(parse_err(lineno, format!("unsupported field {other:?}"))),
    };
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" if layout == Layout::Coordinate => true,
        other => return Err(parse_err(lineno, format!("unsupported symmetry {other:?}"))),
    };

    let mut data_lines = lines.filter_map(|(n, l)| match l {
        Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('%') => None,
        other => Some((n, other)),
    });

    let (size_line, size) = data_lines.next().ok_or_else(|| parse_err(lineno + 1, "missing size line"))?;
    let size = size?;
    let mut toks = size.split_whitespace();
    let rows: usize = parse_num(toks.next(), size_line, "row count")?;
    let cols: usize = parse_num(toks.next(), size_line, "column count")?;
    let nnz: usize = match layout {
        Layout::Coordinate => parse_num(toks.next(), size_line, "entry count")?,
        Layout::Array => rows * cols,
    };
    if toks.next().is_some() {
        return Err(parse_err(size_line, "trailing tokens on size line"));
    }
    if symmetric && rows != cols {
        return Err(parse_err(size_line, "symmetric matrix must be square"));
    }

    let mut last_line = size_line;
    match layout {
        Layout::Array => {
            let mut data = vec![0.0; rows * cols];
            for k in 0..nnz {
                let (n, line) = data_lines
                    .next()
                    .ok_or_else(|| parse_err(last_line + 1, format!("expected {nnz} values, found {k}")))?;
                let line = line?;
                last_line = n;
                let v: f64 = parse_num(line.split_whitespace().next(), n, "value")?;
                if !v.is_finite() {
                    return Err(parse_err(n, "non-finite value"));
                }
                // Column-major on disk, row-major in memory.
                let (i, j) = (k % rows, k / rows);
                data[i * cols + j] = v;
            }
            if let Some((n, _)) = data_lines.next() {
                return Err(parse_err(n, "more values than the size line declares"));
            }
            TallMatrix::from_row_major(rows, cols, data)
        }
        Layout::Coordinate => {
            let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
            for k in 0..nnz {
                let (n, line) = data_lines
                    .next()
                    .ok_or_else(|| parse_err(last_line + 1, format!("expected {nnz} entries, found {k}")))?;
                let line = line?;
                last_line = n;
                let mut toks = line.split_whitespace();
                let i: usize = parse_num(toks.next(), n, "row index")?;
                let j: usize = parse_num(toks.next(), n, "column index")?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(n, format!("index ({i}, {j}) outside {rows}x{cols}")));
                }
                let v = match field {
                    Field::Pattern => 1.0,
                    _ => parse_num::<f64>(toks.next(), n, "value")?,
                };
                if !v.is_finite() {
                    return Err(parse_err(n, "non-finite value"));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
            if let Some((n, _)) = data_lines.next() {
                return Err(parse_err(n, "more entries than the size line declares"));
            }
            TallMatrix::from_triplets(rows, cols, triplets)
        }
    }
}

pub fn write_matrix_market<W: Write>(a: &TallMatrix, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let (rows, cols) = (a.nrows(), a.ncols());
    match a.storage() {
        Storage::Dense(data) => {
            writeln!(w, "%%MatrixMarket matrix array real general")?;
            writeln!(w, "{rows} {cols}")?;
            for j in 0..cols {
                for i in 0..rows {
                    writeln!(w, "{}", data[i * cols + j])?;
                }
            }
        }
        Storage::Sparse {
            row_ptr,
            col_idx,
            values,
        } => {
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{rows} {cols} {}", values.len())?;
            for i in 0..rows {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    writeln!(w, "{} {} {}", i + 1, col_idx[k] + 1, values[k])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<TallMatrix> {
    read_matrix_market(File::open(path)?)
}

pub fn save_matrix_market(a: &TallMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_market(a, File::create(path)?)
}
