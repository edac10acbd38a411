//! Leverage-score-sparsified sketches.
//!
//! LESS-IC splits column `j` into `s_j = ceil(m / b_j)` blocks of width
//! `b_j = max(floor(1 / (beta1 p z_j)), 1)`; the last block is truncated at
//! row `m`. Each block holds one entry `xi * alpha` with
//! `alpha = sqrt(p * width)`, so every column has energy exactly `p m`.
//! LESS-IE keeps entry `(i, j)` with probability `beta1 z_j p` and gives it
//! magnitude `1 / sqrt(beta1 z_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, CALIBRATED};
use crate::error::{Error, Result};
use crate::kwise::{
    default_degree, position_index, scale_to_width, sign_index, sign_of, Independence,
    RandomSource,
};
use crate::leverage::LeverageScores;
use crate::oblivious::{bernoulli_columns, check_accuracy, check_kwise_range};
use crate::sketch::{LessInfo, SketchHeader, SketchKind, SparseSketch};

/// One subcolumn block: rows `lo..hi` (0-based, half-open).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block {
    pub lo: usize,
    pub hi: usize,
    pub alpha: f64,
}

impl Block {
    pub fn width(&self) -> usize {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LessIcSpec {
    pub m: usize,
    pub p: f64,
    pub scores: LeverageScores,
    pub independence: Independence,
    pub seed: u64,
}

impl LessIcSpec {
    pub fn new(
        m: usize,
        p: f64,
        scores: LeverageScores,
        independence: Independence,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            m,
            p,
            scores,
            independence,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.scores.is_empty() {
            return Err(Error::param("LESS-IC needs m >= 1 and at least one score"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param(format!("p = {} is outside (0, 1]", self.p)));
        }
        if let Independence::KWise { degree_k: 0 } = self.independence {
            return Err(Error::param("independence degree K must be at least 1"));
        }
        self.scores.validate()
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn pm(&self) -> f64 {
        self.p * self.m as f64
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `b_j`, capped at `m` (a wider block would still be truncated to `m`).
    pub fn block_width(&self, j: usize) -> usize {
        let x = self.scores.beta1 * self.p * self.scores.z[j];
        if x <= 0.0 {
            return self.m;
        }
        let inv = 1.0 / x;
        if inv >= self.m as f64 {
            return self.m;
        }
        // Guard against 1/x landing just below an integer it equals exactly.
        let mut b = inv.floor();
        if (b + 1.0) - inv <= 1e-12 * inv {
            b += 1.0;
        }
        (b as usize).clamp(1, self.m)
    }

    /// `s_j = ceil(m / b_j)`.
    pub fn subcolumns(&self, j: usize) -> usize {
        self.m.div_ceil(self.block_width(j))
    }

    pub fn subcolumn_layout(&self, j: usize) -> Vec<Block> {
        let b = self.block_width(j);
        (0..self.m.div_ceil(b))
            .map(|g| {
                let lo = g * b;
                let hi = (lo + b).min(self.m);
                Block {
                    lo,
                    hi,
                    alpha: (self.p * (hi - lo) as f64).sqrt(),
                }
            })
            .collect()
    }

    pub fn total_nnz(&self) -> usize {
        (0..self.n()).map(|j| self.subcolumns(j)).sum()
    }

    /// `n + 4 beta1 beta2 p m d`.
    pub fn nnz_bound(&self) -> f64 {
        self.n() as f64 + 4.0 * self.scores.beta1 * self.scores.beta2 * self.pm() * self.scores.d as f64
    }

    pub fn source(&self) -> Result<RandomSource> {
        RandomSource::from_independence(self.independence, self.seed)
    }

    fn header(&self, kind: SketchKind, source: &RandomSource, clamped_columns: usize) -> SketchHeader {
        SketchHeader {
            kind,
            m: self.m,
            n: self.n(),
            p: self.p,
            independence: source.independence(),
            seed: source.seed(),
            scale: 1.0 / self.pm().sqrt(),
            less: Some(LessInfo {
                beta1: self.scores.beta1,
                beta2: self.scores.beta2,
                scores_digest: self.scores.digest(),
                clamped_columns,
            }),
        }
    }
}

pub fn build_less_ic(spec: &LessIcSpec, source: &RandomSource) -> Result<SparseSketch> {
    spec.validate()?;
    if spec.p >= 1.0 {
        return Err(Error::param(
            "LESS-IC with p = 1 is the dense sketch; build a dense OSNAP (s = m) instead",
        ));
    }
    let n = spec.n();
    let widths: Vec<usize> = (0..n).map(|j| spec.block_width(j)).collect();
    let header = spec.header(SketchKind::LessIc, source, 0);

    let columns: Vec<Vec<(u32, f64)>> = match source {
        RandomSource::KWise(family) => {
            let mut offsets = Vec::with_capacity(n + 1);
            offsets.push(0u64);
            for &b in &widths {
                offsets.push(offsets.last().unwrap() + spec.m.div_ceil(b) as u64);
            }
            check_kwise_range(family, offsets[n])?;
            let q = family.modulus();
            (0..n)
                .into_par_iter()
                .map_init(
                    || (Vec::new(), Vec::new()),
                    |(idx, h), j| {
                        let layout = spec.subcolumn_layout(j);
                        idx.clear();
                        for g in 0..layout.len() as u64 {
                            idx.push(sign_index(offsets[j] + g));
                            idx.push(position_index(offsets[j] + g));
                        }
                        family.eval_batch_unchecked(idx, h);
                        layout
                            .iter()
                            .enumerate()
                            .map(|(g, blk)| {
                                let off = scale_to_width(h[2 * g + 1], blk.width() as u64, q) as usize;
                                ((blk.lo + off) as u32, sign_of(h[2 * g]) as f64 * blk.alpha)
                            })
                            .collect()
                    },
                )
                .collect()
        }
        RandomSource::Independent(src) => (0..n)
            .into_par_iter()
            .map(|j| {
                use rand::Rng;
                let mut rng = src.column_rng(j);
                spec.subcolumn_layout(j)
                    .iter()
                    .map(|blk| {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        let off = rng.random_range(0..blk.width());
                        ((blk.lo + off) as u32, sign * blk.alpha)
                    })
                    .collect()
            })
            .collect(),
    };
    SparseSketch::from_columns(header, columns)
}

/// Builds LESS-IE. Columns with `beta1 z_j p > 1` are clamped to
/// probability 1; the count is logged and stored in the header.
pub fn build_less_ie(
    scores: &LeverageScores,
    p: f64,
    m: usize,
    source: &RandomSource,
) -> Result<SparseSketch> {
    let spec = LessIcSpec {
        m,
        p,
        scores: scores.clone(),
        independence: source.independence(),
        seed: source.seed(),
    };
    spec.validate()?;
    let beta1 = scores.beta1;
    let clamped = scores.z.iter().filter(|&&z| beta1 * z * p > 1.0).count();
    if clamped > 0 {
        log::warn!("LESS-IE: {clamped} columns have beta1 z_j p > 1; clamping their probability to 1");
    }
    let columns = bernoulli_columns(m, scores.len(), source, |j| {
        let z = scores.z[j];
        if z <= 0.0 {
            (0.0, 1.0)
        } else {
            ((beta1 * z * p).min(1.0), 1.0 / (beta1 * z).sqrt())
        }
    })?;
    SparseSketch::from_columns(spec.header(SketchKind::LessIe, source, clamped), columns)
}

/// LESS-IC parameters with the calibrated constants.
pub fn less_default_parameters(
    d: usize,
    eps: f64,
    delta: f64,
    scores: LeverageScores,
) -> Result<LessIcSpec> {
    less_default_parameters_with(&CALIBRATED, d, eps, delta, scores)
}

/// `m = ceil(C_m ((d + ln^2(d/delta)) / eps^2 + ln^3(d/delta) / eps))` and
/// `pm = ceil(C_L max(L^2.5 / eps, L^3))` with `L = ln(d / (eps delta))`,
/// capped at `m` (in which case `p = 1` and a warning is logged).
pub fn less_default_parameters_with(
    cal: &Calibration,
    d: usize,
    eps: f64,
    delta: f64,
    scores: LeverageScores,
) -> Result<LessIcSpec> {
    check_accuracy(d, eps, delta)?;
    if d > scores.len() {
        return Err(Error::param(format!(
            "subspace dimension {d} exceeds n = {}",
            scores.len()
        )));
    }
    let ld = (d as f64 / delta).ln().max(0.0);
    let l = (d as f64 / (eps * delta)).ln();
    let m = (cal.c_m * ((d as f64 + ld * ld) / (eps * eps) + ld.powi(3) / eps))
        .ceil()
        .max(1.0) as usize;
    let mut pm = (cal.c_l * (l.powf(2.5) / eps).max(l.powi(3))).ceil().max(1.0) as usize;
    if pm >= m {
        log::warn!("LESS sparsity pm = {pm} reaches m = {m}; using p = 1");
        pm = m;
    }
    let degree_k = default_degree(d, eps, delta, pm as f64);
    LessIcSpec::new(
        m,
        pm as f64 / m as f64,
        scores,
        Independence::KWise { degree_k },
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with(z: Vec<f64>, m: usize, p: f64, beta1: f64) -> LessIcSpec {
        let scores = LeverageScores::new(z, 1, beta1, 1.0).unwrap();
        LessIcSpec::new(m, p, scores, Independence::KWise { degree_k: 4 }, 1).unwrap()
    }

    #[test]
    fn truncated_bottom_block() {
        // b = floor(1 / (beta1 p z)) = 15 with beta1 = 1, p = 0.1, z = 2/3.
        let spec = spec_with(vec![2.0 / 3.0], 70, 0.1, 1.0);
        assert_eq!(spec.block_width(0), 15);
        let layout = spec.subcolumn_layout(0);
        let bounds: Vec<(usize, usize)> = layout.iter().map(|b| (b.lo + 1, b.hi)).collect();
        assert_eq!(bounds, vec![(1, 15), (16, 30), (31, 45), (46, 60), (61, 70)]);
        assert!((layout[4].alpha - (10.0f64 * 0.1).sqrt()).abs() < 1e-15);
        let energy: f64 = layout.iter().map(|b| b.alpha * b.alpha).sum();
        assert!((energy - 7.0).abs() < 1e-12);
    }

    #[test]
    fn extreme_widths() {
        let spec = spec_with(vec![1e-9, 1.0, 0.0], 40, 0.5, 2.0);
        assert_eq!(spec.subcolumn_layout(0).len(), 1);
        assert!((spec.subcolumn_layout(0)[0].alpha - 20f64.sqrt()).abs() < 1e-12);
        assert_eq!(spec.subcolumns(1), 40);
        assert!(spec.subcolumn_layout(1).iter().all(|b| (b.alpha - 0.5f64.sqrt()).abs() < 1e-15));
        assert_eq!(spec.subcolumns(2), 1);
    }

    #[test]
    fn exact_integer_reciprocal_is_not_rounded_down() {
        // 1 / (1 * 0.1 * 0.5) = 20, computed as 19.999999999999996.
        let spec = spec_with(vec![0.5], 100, 0.1, 1.0);
        assert_eq!(spec.block_width(0), 20);
    }

    #[test]
    fn build_matches_layout() {
        let z: Vec<f64> = (0..50).map(|j| (j as f64 + 1.0) / 60.0).collect();
        for ind in [Independence::KWise { degree_k: 6 }, Independence::Full] {
            let mut spec = spec_with(z.clone(), 64, 0.125, 1.5);
            spec.independence = ind;
            let sk = build_less_ic(&spec, &spec.source().unwrap()).unwrap();
            assert_eq!(sk.nnz(), spec.total_nnz());
            for j in 0..50 {
                let layout = spec.subcolumn_layout(j);
                let (rows, vals) = sk.column(j);
                assert_eq!(rows.len(), layout.len());
                for ((r, v), b) in rows.iter().zip(vals).zip(&layout) {
                    assert!((b.lo..b.hi).contains(&(*r as usize)));
                    assert_eq!(v.abs(), b.alpha);
                }
            }
            for e in sk.column_energies() {
                assert!((e - 8.0).abs() <= 1e-12 * 8.0);
            }
            assert!(sk.header().less.is_some());
        }
    }

    #[test]
    fn p_one_is_rejected() {
        let spec = spec_with(vec![0.5; 4], 8, 1.0, 1.0);
        assert!(matches!(build_less_ic(&spec, &spec.source().unwrap()), Err(Error::Parameter(_))));
    }

    #[test]
    fn less_ie_clamps_and_zero_columns() {
        let scores = LeverageScores::new(vec![0.0, 1.0, 0.01], 1, 1.0, 1.0).unwrap();
        let src = RandomSource::from_independence(Independence::Full, 3).unwrap();
        let sk = build_less_ie(&scores, 0.5, 30, &src).unwrap();
        assert!(sk.column(0).0.is_empty());
        assert_eq!(sk.header().less.as_ref().unwrap().clamped_columns, 0);
        let sk = build_less_ie(&scores, 1.0, 30, &src).unwrap();
        assert_eq!(sk.column(1).0.len(), 30);
        let scores = LeverageScores::new(vec![0.9, 0.2], 1, 4.0, 1.0).unwrap();
        let sk = build_less_ie(&scores, 0.5, 30, &src).unwrap();
        assert_eq!(sk.header().less.as_ref().unwrap().clamped_columns, 1);
        assert_eq!(sk.column(0).0.len(), 30);
    }

    #[test]
    fn default_parameters_shape() {
        let scores = LeverageScores::uniform(1 << 16, 16).unwrap();
        let cal = Calibration { c_m: 1.0, c_s: 1.0, c_e: 1.0, c_l: 1.0 / 16.0 };
        let a = less_default_parameters_with(&cal, 16, 0.2, 0.05, scores.clone()).unwrap();
        let b = less_default_parameters_with(&cal, 16, 0.1, 0.05, scores.clone()).unwrap();
        let ratio = b.pm() / a.pm();
        assert!(ratio > 1.0 && ratio < 2.5, "pm ratio {ratio}");
        let ld = (16.0f64 / 0.05).ln();
        let m = ((16.0 + ld * ld) / 0.04 + ld.powi(3) / 0.2).ceil() as usize;
        assert_eq!(a.m, m);
        let big = Calibration { c_l: 1e6, ..cal };
        let c = less_default_parameters_with(&big, 16, 0.2, 0.05, scores).unwrap();
        assert_eq!(c.p, 1.0);
    }
}
