//! Applying sparse sketches in time proportional to `nnz(A)` times the
//! column sparsity.
//!
//! Column `j` of the sketch multiplies row `j` of `A`, so `Pi A` is formed by
//! scattering every row of `A` into the output rows listed in the matching
//! sketch column. The single-chunk path is the reference: rows of `A` are
//! visited in order and the result is scaled once at the end. With several
//! rayon threads the rows are split into contiguous chunks whose partial
//! results are added in chunk order.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::TallMatrix;
use crate::sketch::{SketchHeader, SparseSketch};

/// Default limit on `m * n` for [`materialize_dense`].
pub const DEFAULT_DENSE_CAP: usize = 1 << 25;

fn check_dims(sketch: &SparseSketch, rows: usize) -> Result<()> {
    if sketch.n() != rows {
        return Err(Error::dim(format!(
            "sketch has {} columns but the input has {rows} rows",
            sketch.n()
        )));
    }
    Ok(())
}

fn scatter_rows(sketch: &SparseSketch, a: &TallMatrix, rows: std::ops::Range<usize>, out: &mut [f64]) {
    let d = a.ncols();
    for j in rows {
        let (sk_rows, sk_vals) = sketch.column(j);
        if sk_rows.is_empty() {
            continue;
        }
        a.for_each_in_row(j, |c, v| {
            if v != 0.0 {
                for (&r, &s) in sk_rows.iter().zip(sk_vals) {
                    out[r as usize * d + c] += s * v;
                }
            }
        });
    }
}

/// `Pi A` using the current rayon pool; bit-identical to
/// [`apply_reference`] when the pool has one thread.
pub fn apply(sketch: &SparseSketch, a: &TallMatrix) -> Result<TallMatrix> {
    apply_with(sketch, a, rayon::current_num_threads())
}

/// Single-threaded `Pi A`.
pub fn apply_reference(sketch: &SparseSketch, a: &TallMatrix) -> Result<TallMatrix> {
    apply_with(sketch, a, 1)
}

/// `Pi A` with the rows of `A` split into `chunks` contiguous ranges.
pub fn apply_with(sketch: &SparseSketch, a: &TallMatrix, chunks: usize) -> Result<TallMatrix> {
    check_dims(sketch, a.nrows())?;
    let (m, n, d) = (sketch.m(), a.nrows(), a.ncols());
    let chunks = chunks.clamp(1, n.max(1));
    let mut out = if chunks == 1 {
        let mut out = vec![0.0; m * d];
        scatter_rows(sketch, a, 0..n, &mut out);
        out
    } else {
        let step = n.div_ceil(chunks);
        let partials: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut part = vec![0.0; m * d];
                scatter_rows(sketch, a, c * step..((c + 1) * step).min(n), &mut part);
                part
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut out = iter.next().expect("at least one chunk");
        for part in iter {
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        out
    };
    let scale = sketch.scale();
    out.iter_mut().for_each(|v| *v *= scale);
    TallMatrix::from_row_major(m, d, out)
}

/// `S U` without the global scale, for a dense `U`.
pub fn unscaled_product(sketch: &SparseSketch, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(sketch, u.nrows())?;
    let (m, d) = (sketch.m(), u.ncols());
    // Column j of `ut` is row j of `u`, contiguous in memory.
    let ut = u.transpose();
    let mut out = DMatrix::zeros(d, m);
    for j in 0..sketch.n() {
        let (rows, vals) = sketch.column(j);
        let urow = ut.column(j);
        for (&r, &s) in rows.iter().zip(vals) {
            out.column_mut(r as usize).axpy(s, &urow, 1.0);
        }
    }
    Ok(out.transpose())
}

pub fn apply_to_vector(sketch: &SparseSketch, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(sketch, x.len())?;
    let mut out = vec![0.0; sketch.m()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let (rows, vals) = sketch.column(j);
        for (&r, &s) in rows.iter().zip(vals) {
            out[r as usize] += s * xj;
        }
    }
    let scale = sketch.scale();
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// The scaled sketch `Pi` as a dense matrix, if `m * n <= cap`.
pub fn materialize_dense(sketch: &SparseSketch, cap: usize) -> Result<DMatrix<f64>> {
    let (m, n) = (sketch.m(), sketch.n());
    if m.saturating_mul(n) > cap {
        return Err(Error::MemoryCap { rows: m, cols: n, cap });
    }
    let scale = sketch.scale();
    let mut out = DMatrix::zeros(m, n);
    for j in 0..n {
        let (rows, vals) = sketch.column(j);
        for (&r, &v) in rows.iter().zip(vals) {
            out[(r as usize, j)] = scale * v;
        }
    }
    Ok(out)
}

/// Inverse of [`materialize_dense`]: recovers the unscaled entries by
/// dividing by `header.scale`.
pub fn from_dense(header: SketchHeader, pi: &DMatrix<f64>) -> Result<SparseSketch> {
    if pi.shape() != (header.m, header.n) {
        return Err(Error::dim(format!(
            "dense matrix is {}x{}, header says {}x{}",
            pi.nrows(),
            pi.ncols(),
            header.m,
            header.n
        )));
    }
    let scale = header.scale;
    let columns = (0..header.n)
        .map(|j| {
            pi.column(j)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, v / scale))
                .collect()
        })
        .collect();
    SparseSketch::from_columns(header, columns)
}
