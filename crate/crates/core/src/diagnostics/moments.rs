//! Trace moments use the normalized trace `tr = Tr / d`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{mean_and_se, run_trials, Embedding, SketchModel};
use crate::error::{Error, Result};
use crate::kwise::derive_seed;

const MAX_Q: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentProbe {
    pub q: usize,
    pub trials: usize,
    pub estimate: f64,
    pub std_error: f64,
}

impl MomentProbe {
    /// `|estimate - value| / std_error`.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.estimate - value).abs() / self.std_error
    }
}

fn check_q(q: usize) -> Result<()> {
    if q == 0 || q > MAX_Q {
        return Err(Error::param(format!("moment order q = {q} must be in 1..={MAX_Q}")));
    }
    Ok(())
}

/// `tr(A^{2q}) = (1/d) sum_k lambda_k^{2q}` for symmetric `A`, from its
/// eigenvalues.
pub fn normalized_trace_power(a: &DMatrix<f64>, q: usize) -> Result<f64> {
    check_q(q)?;
    let d = a.nrows();
    if d == 0 || a.ncols() != d {
        return Err(Error::dim(format!("expected a nonempty square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let sum: f64 = a
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.powi(2 * q as i32))
        .sum();
    let value = sum / d as f64;
    if !value.is_finite() {
        return Err(Error::Overflow { q });
    }
    Ok(value)
}

fn probe(q: usize, samples: &[f64]) -> MomentProbe {
    let (estimate, std_error) = mean_and_se(samples);
    MomentProbe {
        q,
        trials: samples.len(),
        estimate,
        std_error,
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::param("at least one trial is required"));
    }
    Ok(())
}

/// Monte-Carlo estimate of `E tr((X^T X - I)^{2q})` with `X = Pi U` over
/// fresh sketches for a fixed `U`.
pub fn trace_moment(
    model: &SketchModel,
    u: &DMatrix<f64>,
    q: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentProbe> {
    check_q(q)?;
    check_trials(trials)?;
    let d = u.ncols();
    let samples = run_trials(0..trials, seed, |_, ts| {
        let sk = model.realize(u, derive_seed(ts, 1))?;
        let x = sk.unscaled_product(u)? * sk.scale();
        let e = x.tr_mul(&x) - DMatrix::<f64>::identity(d, d);
        normalized_trace_power(&e, q)
    })?;
    Ok(probe(q, &samples))
}

/// Monte-Carlo estimate of `E tr(Gamma^{2q})` where
/// `Gamma = (S1 U)^T (S2 U) + (S2 U)^T (S1 U)` for independent unscaled
/// copies `S1`, `S2`.
pub fn decoupled_gamma_moment(
    model: &SketchModel,
    u: &DMatrix<f64>,
    q: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentProbe> {
    check_q(q)?;
    check_trials(trials)?;
    let samples = run_trials(0..trials, seed, |_, ts| {
        let m1 = model.realize(u, derive_seed(ts, 1))?.unscaled_product(u)?;
        let n2 = model.realize(u, derive_seed(ts, 2))?.unscaled_product(u)?;
        let a = m1.tr_mul(&n2);
        let gamma = &a + a.transpose();
        normalized_trace_power(&gamma, q)
    })?;
    Ok(probe(q, &samples))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalSplit {
    /// `sum_j (sum_i S_ij^2 - pm) u_j u_j^T`.
    pub diag: DMatrix<f64>,
    /// `(SU)^T (SU) - pm I - diag`.
    pub offdiag: DMatrix<f64>,
    pub diag_norm: f64,
    pub offdiag_norm: f64,
    pub pm: f64,
}

fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Splits the unscaled embedding error `(SU)^T (SU) - pm I` into the
/// column-energy term and the cross term. `u` need not be orthonormal.
pub fn diagonal_offdiagonal_split<E: Embedding + ?Sized>(emb: &E, u: &DMatrix<f64>) -> Result<DiagonalSplit> {
    let su = emb.unscaled_product(u)?;
    let pm = emb.pm();
    let d = u.ncols();
    let energies = emb.column_energies();
    let mut weighted = u.clone();
    for (j, mut row) in weighted.row_iter_mut().enumerate() {
        row *= energies[j] - pm;
    }
    let diag = u.tr_mul(&weighted);
    let offdiag = su.tr_mul(&su) - DMatrix::<f64>::identity(d, d) * pm - &diag;
    Ok(DiagonalSplit {
        diag_norm: spectral_norm_sym(&diag),
        offdiag_norm: spectral_norm_sym(&offdiag),
        diag,
        offdiag,
        pm,
    })
}

/// Monte-Carlo estimate of `E tr((diag / pm)^2)`.
pub fn diagonal_moment(model: &SketchModel, u: &DMatrix<f64>, trials: usize, seed: u64) -> Result<MomentProbe> {
    check_trials(trials)?;
    let samples = run_trials(0..trials, seed, |_, ts| {
        let sk = model.realize(u, derive_seed(ts, 1))?;
        let split = diagonal_offdiagonal_split(&sk, u)?;
        normalized_trace_power(&(split.diag / split.pm), 1)
    })?;
    Ok(probe(1, &samples))
}

/// Singular-value band for an `m x d` standard Gaussian matrix scaled by
/// `1 / sqrt(m)`: `1 -+ (sqrt(d) + t) / sqrt(m)`, holding with probability
/// at least `1 - 2 exp(-t^2 / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBand {
    pub lower: f64,
    pub upper: f64,
    /// `2 exp(-t^2 / 2)`.
    pub tail: f64,
    /// `max(0, 1 - tail)`.
    pub probability: f64,
}

pub fn gaussian_reference(m: usize, d: usize, t: f64) -> Result<GaussianBand> {
    if m <= d {
        return Err(Error::param(format!("need m > d, got m = {m}, d = {d}")));
    }
    if !(t >= 0.0) {
        return Err(Error::param(format!("t = {t} must be non-negative")));
    }
    let (m, d) = (m as f64, d as f64);
    let width = (d / m).sqrt() + t / m.sqrt();
    let tail = 2.0 * (-t * t / 2.0).exp();
    Ok(GaussianBand {
        lower: 1.0 - width,
        upper: 1.0 + width,
        tail,
        probability: (1.0 - tail).max(0.0),
    })
}
