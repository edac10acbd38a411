//! Sketch matrices and their file format.
//!
//! A sparse sketch stores the unscaled matrix `S` column by column together
//! with the global scale `1 / sqrt(pm)`, so the embedding is `Pi = scale * S`.
//!
//! # File layout (format version 1)
//!
//! All integers little-endian.
//!
//! | offset        | size        | content                                   |
//! |---------------|-------------|-------------------------------------------|
//! | 0             | 8           | magic `b"OSKETCH\0"`                      |
//! | 8             | 4           | `u32` format version (= 1)                |
//! | 12            | 4           | `u32` header length `H`                   |
//! | 16            | `H`         | UTF-8 JSON [`SketchHeader`]               |
//! | 16 + H        | 8           | `u64` number of stored entries `nnz`      |
//! | 24 + H        | 8 (n + 1)   | `u64` column pointers                     |
//! | ...           | 4 nnz       | `u32` zero-based row indices              |
//! | ...           | 8 nnz       | `f64` unscaled values                     |

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kwise::Independence;

pub const SKETCH_MAGIC: &[u8; 8] = b"OSKETCH\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchKind {
    Osnap,
    OseIe,
    LessIc,
    LessIe,
    GaussianDense,
    RademacherDense,
}

impl SketchKind {
    pub fn is_dense(&self) -> bool {
        matches!(self, SketchKind::GaussianDense | SketchKind::RademacherDense)
    }

    pub fn is_oblivious(&self) -> bool {
        !matches!(self, SketchKind::LessIc | SketchKind::LessIe)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SketchKind::Osnap => "osnap",
            SketchKind::OseIe => "ose-ie",
            SketchKind::LessIc => "less-ic",
            SketchKind::LessIe => "less-ie",
            SketchKind::GaussianDense => "gaussian-dense",
            SketchKind::RademacherDense => "rademacher-dense",
        }
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "osnap" => SketchKind::Osnap,
            "ose-ie" => SketchKind::OseIe,
            "less-ic" => SketchKind::LessIc,
            "less-ie" => SketchKind::LessIe,
            "gaussian-dense" | "gaussian" => SketchKind::GaussianDense,
            "rademacher-dense" | "rademacher" => SketchKind::RademacherDense,
            other => return Err(Error::param(format!("unknown sketch kind '{other}'"))),
        })
    }
}

/// Provenance of a leverage-adapted sketch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LessInfo {
    pub beta1: f64,
    pub beta2: f64,
    /// Hex digest from [`crate::leverage::LeverageScores::digest`].
    pub scores_digest: String,
    /// Columns whose sampling probability was clamped to 1 (LESS-IE only).
    #[serde(default)]
    pub clamped_columns: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchHeader {
    pub kind: SketchKind,
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub independence: Independence,
    pub seed: u64,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub less: Option<LessInfo>,
}

/// Column-compressed unscaled sketch `S` with the global scale of `Pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSketch {
    header: SketchHeader,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl SparseSketch {
    /// Assembles a sketch from per-column `(row, value)` lists, checking that
    /// rows are strictly increasing and in range and that values are nonzero.
    pub fn from_columns(header: SketchHeader, columns: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if columns.len() != header.n {
            return Err(Error::dim(format!(
                "{} columns supplied for a sketch with n = {}",
                columns.len(),
                header.n
            )));
        }
        let nnz = columns.iter().map(Vec::len).sum();
        let mut col_ptr = Vec::with_capacity(header.n + 1);
        let mut rows = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        col_ptr.push(0);
        for col in columns {
            for (r, v) in col {
                rows.push(r);
                values.push(v);
            }
            col_ptr.push(rows.len());
        }
        Self::from_raw(header, col_ptr, rows, values)
    }

    pub fn from_raw(
        header: SketchHeader,
        col_ptr: Vec<usize>,
        rows: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let sketch = Self {
            header,
            col_ptr,
            rows,
            values,
        };
        sketch.validate()?;
        Ok(sketch)
    }

    fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.m == 0 || h.n == 0 {
            return Err(Error::param("sketch dimensions must be positive"));
        }
        if h.m > u32::MAX as usize {
            return Err(Error::param("sketch row count exceeds u32 range"));
        }
        if self.col_ptr.len() != h.n + 1
            || self.col_ptr[0] != 0
            || *self.col_ptr.last().unwrap() != self.rows.len()
            || self.rows.len() != self.values.len()
        {
            return Err(Error::Format("inconsistent column pointers".into()));
        }
        for j in 0..h.n {
            let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
            if lo > hi {
                return Err(Error::Format(format!("column {j} has negative length")));
            }
            let rows = &self.rows[lo..hi];
            if rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Format(format!(
                    "row indices of column {j} are not strictly increasing"
                )));
            }
            if rows.last().is_some_and(|&r| r as usize >= h.m) {
                return Err(Error::Format(format!("row index out of range in column {j}")));
            }
            if self.values[lo..hi].iter().any(|v| *v == 0.0 || !v.is_finite()) {
                return Err(Error::Format(format!(
                    "column {j} stores a zero or non-finite value"
                )));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> &SketchHeader {
        &self.header
    }

    pub fn kind(&self) -> SketchKind {
        self.header.kind
    }

    pub fn m(&self) -> usize {
        self.header.m
    }

    pub fn n(&self) -> usize {
        self.header.n
    }

    pub fn p(&self) -> f64 {
        self.header.p
    }

    pub fn scale(&self) -> f64 {
        self.header.scale
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_indices(&self) -> &[u32] {
        &self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows and unscaled values of column `j`.
    #[inline]
    pub fn column(&self, j: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.rows[lo..hi], &self.values[lo..hi])
    }

    /// `sum_i S_ij^2` for every column.
    pub fn column_energies(&self) -> Vec<f64> {
        (0..self.n())
            .map(|j| self.column(j).1.iter().map(|v| v * v).sum())
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(SKETCH_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.nnz() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.col_ptr.len() + 12 * self.nnz());
        for &p in &self.col_ptr {
            buf.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &r in &self.rows {
            buf.extend_from_slice(&r.to_le_bytes());
        }
        for &v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SKETCH_MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let header_len = read_u32(&mut r)? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let header: SketchHeader = serde_json::from_slice(&header)?;
        let nnz = read_u64(&mut r)? as usize;
        let mut col_ptr = Vec::with_capacity(header.n + 1);
        for _ in 0..=header.n {
            col_ptr.push(read_u64(&mut r)? as usize);
        }
        let mut bytes = vec![0u8; 4 * nnz];
        r.read_exact(&mut bytes)?;
        let rows = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut bytes = vec![0u8; 8 * nnz];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_raw(header, col_ptr, rows, values)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Dense unscaled baseline matrix (Gaussian or Rademacher entries of
/// variance `p`).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSketch {
    pub header: SketchHeader,
    pub matrix: DMatrix<f64>,
}

impl DenseSketch {
    pub fn scale(&self) -> f64 {
        self.header.scale
    }

    /// The scaled embedding matrix `Pi`.
    pub fn scaled(&self) -> DMatrix<f64> {
        &self.matrix * self.header.scale
    }

    pub fn column_energies(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.norm_squared()).collect()
    }
}

/// Either kind of built sketch.
#[derive(Clone, Debug, PartialEq)]
pub enum Sketch {
    Sparse(SparseSketch),
    Dense(DenseSketch),
}

impl Sketch {
    pub fn header(&self) -> &SketchHeader {
        match self {
            Sketch::Sparse(s) => s.header(),
            Sketch::Dense(s) => &s.header,
        }
    }

    pub fn into_sparse(self) -> Option<SparseSketch> {
        match self {
            Sketch::Sparse(s) => Some(s),
            Sketch::Dense(_) => None,
        }
    }
}
