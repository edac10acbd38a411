use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Embedding;
use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub s_min: f64,
    pub s_max: f64,
    /// `||X^T X - I||` in spectral norm, `X = Pi U`.
    pub opnorm_err: f64,
    pub eps_target: f64,
    /// `1 - eps <= s_min` and `s_max <= 1 + eps`.
    pub pass: bool,
}

impl DistortionReport {
    /// `max(s_max - 1, 1 - s_min)`.
    pub fn distortion(&self) -> f64 {
        (self.s_max - 1.0).max(1.0 - self.s_min)
    }
}

/// Errors unless `||U^T U - I||_F <= 1e-10`.
pub fn check_orthonormal(u: &DMatrix<f64>) -> Result<()> {
    let d = u.ncols();
    let deviation = (u.tr_mul(u) - DMatrix::<f64>::identity(d, d)).norm();
    if deviation.is_nan() || deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Extreme singular values of `X` (an `m x d` image of an orthonormal
/// basis) and the spectral norm of `X^T X - I`.
pub fn distortion_of_product(x: &DMatrix<f64>, eps: f64) -> DistortionReport {
    let d = x.ncols();
    let sv = x.singular_values();
    let (s_min, s_max) = if sv.is_empty() {
        (0.0, 0.0)
    } else {
        (sv.min(), sv.max())
    };
    // A short matrix (m < d) has d - m zero singular values.
    let s_min = if x.nrows() < d { 0.0 } else { s_min };
    let gram = x.tr_mul(x) - DMatrix::<f64>::identity(d, d);
    let opnorm_err = gram
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()));
    DistortionReport {
        s_min,
        s_max,
        opnorm_err,
        eps_target: eps,
        pass: 1.0 - eps <= s_min && s_max <= 1.0 + eps,
    }
}

/// Distortion of `Pi` on the column space of the orthonormal `u`.
pub fn distortion<E: Embedding + ?Sized>(emb: &E, u: &DMatrix<f64>, eps: f64) -> Result<DistortionReport> {
    check_orthonormal(u)?;
    let x = emb.unscaled_product(u)? * emb.scale();
    Ok(distortion_of_product(&x, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kwise::Independence;
    use crate::oblivious::SketchSpec;
    use crate::sketch::SketchKind;

    #[test]
    fn identity_sketch_is_an_isometry() {
        let x = DMatrix::<f64>::identity(6, 3);
        let r = distortion_of_product(&x, 0.1);
        assert!((r.s_min - 1.0).abs() < 1e-15 && (r.s_max - 1.0).abs() < 1e-15);
        assert!(r.opnorm_err < 1e-15 && r.pass);
    }

    #[test]
    fn rejects_non_orthonormal_basis() {
        let spec = SketchSpec::new(SketchKind::GaussianDense, 10, 6, 1.0, Independence::Full, 0).unwrap();
        let sk = spec.build().unwrap();
        let u = DMatrix::<f64>::identity(6, 2) * 0.5;
        match distortion(&sk, &u, 0.5) {
            Err(Error::NotOrthonormal { deviation }) => assert!((deviation - 0.75 * 2f64.sqrt()).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_is_self_consistent() {
        let x = DMatrix::from_row_slice(3, 2, &[1.2, 0.1, -0.3, 0.8, 0.0, 0.2]);
        let r = distortion_of_product(&x, 0.25);
        let bound = (r.s_max * r.s_max - 1.0).abs().max((r.s_min * r.s_min - 1.0).abs());
        assert!(r.opnorm_err >= bound - 1e-12);
        assert_eq!(r.pass, 1.0 - 0.25 <= r.s_min && r.s_max <= 1.25);
    }
}
