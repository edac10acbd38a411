//! Tall input matrices, stored either densely (row-major) or as sorted row
//! lists.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    /// Row-major, `rows * cols` entries.
    Dense(Vec<f64>),
    /// Compressed rows with strictly increasing column indices per row.
    Sparse {
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TallMatrix {
    rows: usize,
    cols: usize,
    storage: Storage,
}

impl TallMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            storage: Storage::Dense(vec![0.0; rows * cols]),
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self {
            rows,
            cols,
            storage: Storage::Dense(data),
        })
    }

    pub fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(a.row(i).iter());
        }
        Self {
            rows,
            cols,
            storage: Storage::Dense(data),
        }
    }

    /// Builds a sparse matrix from 0-based `(row, col, value)` triplets.
    /// Duplicate positions are summed; explicit zeros are kept.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if cols > u32::MAX as usize {
            return Err(Error::param("too many columns for sparse storage"));
        }
        for &(i, j, v) in &triplets {
            if i >= rows || j >= cols {
                return Err(Error::dim(format!(
                    "entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::param(format!("non-finite entry at ({i}, {j})")));
            }
        }
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j as u32);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            storage: Storage::Sparse {
                row_ptr,
                col_idx,
                values,
            },
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(data) => data.iter().filter(|v| **v != 0.0).count(),
            Storage::Sparse { values, .. } => values.iter().filter(|v| **v != 0.0).count(),
        }
    }

    /// Calls `f(col, value)` for each stored entry of row `i`.
    #[inline]
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match &self.storage {
            Storage::Dense(data) => {
                for (c, &v) in data[i * self.cols..(i + 1) * self.cols].iter().enumerate() {
                    f(c, v);
                }
            }
            Storage::Sparse {
                row_ptr,
                col_idx,
                values,
            } => {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    f(col_idx[k] as usize, values[k]);
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(data) => data[i * self.cols + j],
            Storage::Sparse {
                row_ptr,
                col_idx,
                values,
            } => {
                let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                match cols.binary_search(&(j as u32)) {
                    Ok(k) => values[row_ptr[i] + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            self.for_each_in_row(i, |c, v| out[(i, c)] += v);
        }
        out
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Self {
        match &self.storage {
            Storage::Dense(_) => self.clone(),
            Storage::Sparse { .. } => {
                let mut data = vec![0.0; self.rows * self.cols];
                for i in 0..self.rows {
                    let row = &mut data[i * self.cols..(i + 1) * self.cols];
                    self.for_each_in_row(i, |c, v| row[c] += v);
                }
                Self {
                    rows: self.rows,
                    cols: self.cols,
                    storage: Storage::Dense(data),
                }
            }
        }
    }

    /// `self * b` for a small dense `b`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.cols {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                b.nrows(),
                b.ncols()
            )));
        }
        let k = b.ncols();
        let bt = b.transpose();
        let mut out = DMatrix::zeros(self.rows, k);
        let mut acc = vec![0.0; k];
        for i in 0..self.rows {
            acc.fill(0.0);
            self.for_each_in_row(i, |c, v| {
                if v != 0.0 {
                    for (a, &w) in acc.iter_mut().zip(bt.column(c).iter()) {
                        *a += v * w;
                    }
                }
            });
            for (t, a) in acc.iter().enumerate() {
                out[(i, t)] = *a;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        let values = match &self.storage {
            Storage::Dense(data) => data,
            Storage::Sparse { values, .. } => values,
        };
        values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<&DMatrix<f64>> for TallMatrix {
    fn from(a: &DMatrix<f64>) -> Self {
        Self::from_dmatrix(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = TallMatrix::from_triplets(3, 2, vec![(2, 1, 1.0), (0, 1, 2.0), (2, 1, 0.5), (0, 0, -1.0)])
            .unwrap();
        assert_eq!(a.get(0, 0), -1.0);
        assert_eq!(a.get(0, 1), 2.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.get(2, 1), 1.5);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.to_dense().to_dmatrix(), a.to_dmatrix());
        assert!(TallMatrix::from_triplets(3, 2, vec![(3, 0, 1.0)]).is_err());
        assert!(TallMatrix::from_triplets(3, 2, vec![(0, 0, f64::NAN)]).is_err());
    }

    #[test]
    fn dense_round_trip_and_product() {
        let m = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        let t = TallMatrix::from_dmatrix(&m);
        assert_eq!(t.to_dmatrix(), m);
        assert_eq!(t.get(2, 1), 7.0);
        let b = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.0);
        assert_eq!(t.mul_dense(&b).unwrap(), &m * &b);
        assert!(TallMatrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
    }
}
