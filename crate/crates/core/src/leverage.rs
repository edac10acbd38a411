//! Exact and coarse approximate leverage scores.
//!
//! `approx_leverage` sketches `A` with an OSNAP of `16 d` rows and 8 nonzeros
//! per column, takes `R` from a QR factorization of the sketch, and estimates
//! the row norms of `A R^{-1}` with `k = ceil(8 / gamma)` Gaussian test
//! vectors. Estimates are doubled and clamped to `[0, 1]`. The declared
//! `beta1` is `2 n^gamma`; `beta2` is the measured `max(1, sum(z) / d)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apply::apply_reference;
use crate::error::{Error, Result};
use crate::kwise::{derive_seed, Independence};
use crate::matrix::TallMatrix;
use crate::oblivious::{build_osnap, SketchSpec};

const SKETCH_ROWS_PER_DIM: usize = 16;
const SKETCH_SPARSITY: usize = 8;
const RETRIES: u64 = 3;
const INFLATION: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeverageScores {
    /// Dimension of the column space the scores describe.
    pub d: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub z: Vec<f64>,
}

impl LeverageScores {
    pub fn new(z: Vec<f64>, d: usize, beta1: f64, beta2: f64) -> Result<Self> {
        let s = Self { d, beta1, beta2, z };
        s.validate()?;
        Ok(s)
    }

    /// `z_i = d / n` with `beta1 = beta2 = 1`.
    pub fn uniform(n: usize, d: usize) -> Result<Self> {
        if d > n || n == 0 {
            return Err(Error::param(format!("uniform scores need 1 <= d <= n, got d = {d}, n = {n}")));
        }
        Self::new(vec![d as f64 / n as f64; n], d, 1.0, 1.0)
    }

    /// Exact scores of a matrix with orthonormal columns: squared row norms.
    pub fn from_orthonormal(u: &DMatrix<f64>) -> Self {
        let z = (0..u.nrows()).map(|i| u.row(i).norm_squared().min(1.0)).collect();
        Self {
            d: u.ncols(),
            beta1: 1.0,
            beta2: 1.0,
            z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 >= 1.0 && self.beta2 >= 1.0) {
            return Err(Error::param(format!(
                "beta1 = {}, beta2 = {} must both be at least 1",
                self.beta1, self.beta2
            )));
        }
        if let Some(i) = self.z.iter().position(|z| !(0.0..=1.0).contains(z)) {
            return Err(Error::param(format!("score z[{i}] = {} is outside [0, 1]", self.z[i])));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.z.iter().sum()
    }

    /// Hex SHA-256 of `d`, `beta1`, `beta2` and the scores, little-endian.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.d as u64).to_le_bytes());
        h.update(self.beta1.to_le_bytes());
        h.update(self.beta2.to_le_bytes());
        for z in &self.z {
            h.update(z.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let scores: Self = serde_json::from_str(s)?;
        scores.validate()?;
        Ok(scores)
    }
}

/// Thin QR of `a` with a rank check: singular values of `R` below
/// `max(n, d) * machine_eps * s_max` count as zero.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, d) = a.shape();
    if d == 0 || d > n {
        return Err(Error::dim(format!("expected a tall matrix, got {n}x{d}")));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let rank = numerical_rank(&r, n.max(d));
    if rank < d {
        return Err(Error::RankDeficient { rank, cols: d });
    }
    Ok((qr.q(), r))
}

fn numerical_rank(r: &DMatrix<f64>, size: usize) -> usize {
    let sv = r.singular_values();
    let smax = sv.max();
    if !(smax > 0.0) {
        return 0;
    }
    let tol = size as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn exact_leverage(a: &TallMatrix) -> Result<LeverageScores> {
    let (q, _) = orthonormal_basis(&a.to_dmatrix())?;
    Ok(LeverageScores::from_orthonormal(&q))
}

pub fn approx_leverage(a: &TallMatrix, gamma: f64, seed: u64) -> Result<LeverageScores> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param(format!("gamma = {gamma} is outside (0, 1)")));
    }
    let (n, d) = (a.nrows(), a.ncols());
    if d == 0 || d > n {
        return Err(Error::dim(format!("expected a tall matrix, got {n}x{d}")));
    }
    let m0 = (SKETCH_ROWS_PER_DIM * d).div_ceil(SKETCH_SPARSITY) * SKETCH_SPARSITY;
    let k = (8.0 / gamma).ceil() as usize;
    let mut rank = 0;
    for attempt in 0..=RETRIES {
        let attempt_seed = derive_seed(seed, attempt);
        let spec = SketchSpec::osnap(m0, n, SKETCH_SPARSITY, Independence::Full, attempt_seed)?;
        let sketch = build_osnap(&spec, &spec.source()?)?;
        let sa = apply_reference(&sketch, a)?.to_dmatrix();
        let r = sa.qr().r();
        rank = numerical_rank(&r, m0.max(d));
        if rank < d {
            log::warn!("leverage sketch has rank {rank} < {d} (attempt {attempt})");
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(attempt_seed, u64::MAX));
        let g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
        let w = r
            .solve_upper_triangular(&g)
            .ok_or(Error::RankDeficient { rank, cols: d })?;
        let y = a.mul_dense(&w)?;
        let z: Vec<f64> = (0..n)
            .map(|i| (INFLATION * y.row(i).norm_squared() / k as f64).min(1.0))
            .collect();
        let beta1 = (INFLATION * (n as f64).powf(gamma)).max(1.0);
        let beta2 = (z.iter().sum::<f64>() / d as f64).max(1.0);
        return LeverageScores::new(z, d, beta1, beta2);
    }
    Err(Error::RankDeficient { rank, cols: d })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub lower_bound_ok: bool,
    pub sum_ok: bool,
    /// `min_i (z_i - l_i / beta1)`; negative when the lower bound fails.
    pub worst_lower_margin: f64,
    /// `beta2 d - sum(z)`.
    pub sum_margin: f64,
    pub score_sum: f64,
    /// Indices with `z_i < l_i / beta1`.
    pub violating: Vec<usize>,
}

/// Checks `l_i / beta1 <= z_i` and `sum(z) <= beta2 d` against exact
/// scores, with an absolute slack of `1e-12` (`1e-10 d` for the sum).
pub fn validate_scores(a: &TallMatrix, scores: &LeverageScores) -> Result<ValidationReport> {
    if scores.len() != a.nrows() {
        return Err(Error::dim(format!(
            "{} scores for a matrix with {} rows",
            scores.len(),
            a.nrows()
        )));
    }
    let exact = exact_leverage(a)?;
    let d = exact.d as f64;
    let mut worst = f64::INFINITY;
    let mut violating = Vec::new();
    for (i, (&z, &l)) in scores.z.iter().zip(&exact.z).enumerate() {
        let margin = z - l / scores.beta1;
        worst = worst.min(margin);
        if margin < -1e-12 {
            violating.push(i);
        }
    }
    let score_sum = scores.sum();
    let sum_margin = scores.beta2 * d - score_sum;
    let sum_ok = sum_margin >= -1e-10 * d;
    let lower_bound_ok = violating.is_empty();
    Ok(ValidationReport {
        pass: sum_ok && lower_bound_ok,
        lower_bound_ok,
        sum_ok,
        worst_lower_margin: worst,
        sum_margin,
        score_sum,
        violating,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn coordinate_subspace_scores() {
        let a = DMatrix::from_fn(10, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let s = exact_leverage(&TallMatrix::from_dmatrix(&a)).unwrap();
        for (i, z) in s.z.iter().enumerate() {
            let expect = if i < 3 { 1.0 } else { 0.0 };
            assert!((z - expect).abs() < 1e-14);
        }
        assert_eq!((s.beta1, s.beta2, s.d), (1.0, 1.0, 3));
    }

    #[test]
    fn exact_scores_sum_to_d() {
        let a = TallMatrix::from_dmatrix(&random(100, 5, 1));
        let s = exact_leverage(&a).unwrap();
        assert!((s.sum() - 5.0).abs() < 1e-10);
        let report = validate_scores(&a, &s).unwrap();
        assert!(report.pass);
        assert!(report.sum_margin.abs() < 1e-10);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut a = random(50, 4, 2);
        let c = a.column(0) * 2.0 - a.column(1);
        a.set_column(3, &c);
        let err = exact_leverage(&TallMatrix::from_dmatrix(&a)).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 3, cols: 4 }), "{err}");
        let err = approx_leverage(&TallMatrix::from_dmatrix(&a), 0.5, 1).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
    }

    #[test]
    fn halved_scores_fail_validation() {
        let a = TallMatrix::from_dmatrix(&random(60, 3, 3));
        let mut s = exact_leverage(&a).unwrap();
        s.z.iter_mut().for_each(|z| *z /= 2.0);
        let report = validate_scores(&a, &s).unwrap();
        assert!(!report.pass && !report.lower_bound_ok && report.sum_ok);
        assert_eq!(report.violating.len(), 60);
    }

    #[test]
    fn approx_scores_pass_on_random_matrix() {
        let a = TallMatrix::from_dmatrix(&random(500, 10, 4));
        for gamma in [0.25, 0.5] {
            let s = approx_leverage(&a, gamma, 9).unwrap();
            let report = validate_scores(&a, &s).unwrap();
            assert!(report.pass, "{report:?}");
            assert!((s.beta1 - 2.0 * 500f64.powf(gamma)).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip_and_digest() {
        let s = LeverageScores::new(vec![0.5, 0.25, 1.0], 2, 1.5, 1.0).unwrap();
        let back = LeverageScores::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.digest(), s.digest());
        assert_eq!(s.digest().len(), 64);
        let mut t = s.clone();
        t.z[1] = 0.3;
        assert_ne!(t.digest(), s.digest());
        assert!(LeverageScores::new(vec![1.5], 1, 1.0, 1.0).is_err());
        assert!(LeverageScores::new(vec![0.5], 1, 0.5, 1.0).is_err());
    }
}
