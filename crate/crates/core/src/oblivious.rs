//! Oblivious sketches: block OSNAP, i.i.d.-entry OSE-IE and the dense
//! Gaussian / Rademacher comparison models.

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Calibration, CALIBRATED};
use crate::error::{Error, Result};
use crate::kwise::{
    default_degree, position_index, scale_to_width, sign_index, sign_of, unit_of, Independence,
    KWiseFamily, RandomSource,
};
use crate::sketch::{DenseSketch, Sketch, SketchHeader, SketchKind, SparseSketch};

/// Parameters of an oblivious sketch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub m: usize,
    pub n: usize,
    /// Per-entry variance of `S`; for OSNAP `p m` is the column sparsity.
    pub p: f64,
    pub independence: Independence,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(
        kind: SketchKind,
        m: usize,
        n: usize,
        p: f64,
        independence: Independence,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            m,
            n,
            p,
            independence,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// OSNAP with `s` nonzeros per column, i.e. `p = s / m`.
    pub fn osnap(m: usize, n: usize, s: usize, independence: Independence, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m must be at least 1"));
        }
        Self::new(SketchKind::Osnap, m, n, s as f64 / m as f64, independence, seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_m(mut self, m: usize) -> Result<Self> {
        if self.kind == SketchKind::Osnap {
            let s = self.sparsity().unwrap_or(1);
            return Self::osnap(m, self.n, s, self.independence, self.seed);
        }
        self.m = m;
        self.validate()?;
        Ok(self)
    }

    /// `p m`, the expected (for OSNAP, exact) number of nonzeros per column.
    pub fn pm(&self) -> f64 {
        self.p * self.m as f64
    }

    /// `s = pm` when it is an integer.
    pub fn sparsity(&self) -> Option<usize> {
        integer_sparsity(self.pm())
    }

    /// `1 / sqrt(pm)`, with `pm` rounded to the integer sparsity for OSNAP
    /// so that `p = s / m` does not leave a rounding error in the scale.
    pub fn scale(&self) -> f64 {
        match (self.kind, self.sparsity()) {
            (SketchKind::Osnap, Some(s)) => 1.0 / (s as f64).sqrt(),
            _ => 1.0 / self.pm().sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::param(format!(
                "sketch dimensions must be positive (m = {}, n = {})",
                self.m, self.n
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param(format!("p = {} is outside (0, 1]", self.p)));
        }
        if let Independence::KWise { degree_k: 0 } = self.independence {
            return Err(Error::param("independence degree K must be at least 1"));
        }
        match self.kind {
            SketchKind::Osnap => {
                let s = self.sparsity().ok_or_else(|| {
                    Error::Structural(format!("s = pm = {} is not an integer", self.pm()))
                })?;
                if s == 0 {
                    return Err(Error::param("OSNAP sparsity s = pm must be at least 1"));
                }
                if self.m % s != 0 {
                    return Err(Error::Structural(format!(
                        "sparsity s = {s} does not divide m = {}",
                        self.m
                    )));
                }
            }
            SketchKind::LessIc | SketchKind::LessIe => {
                return Err(Error::param(
                    "leverage-adapted sketches are specified with LessIcSpec / build_less_ie",
                ))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn source(&self) -> Result<RandomSource> {
        RandomSource::from_independence(self.independence, self.seed)
    }

    pub(crate) fn header(&self, independence: Independence, seed: u64) -> SketchHeader {
        SketchHeader {
            kind: self.kind,
            m: self.m,
            n: self.n,
            p: self.p,
            independence,
            seed,
            scale: self.scale(),
            less: None,
        }
    }

    /// Builds the sketch from the randomness named in the spec.
    pub fn build(&self) -> Result<Sketch> {
        let source = self.source()?;
        match self.kind {
            SketchKind::Osnap => Ok(Sketch::Sparse(build_osnap(self, &source)?)),
            SketchKind::OseIe => Ok(Sketch::Sparse(build_ose_ie(self, &source)?)),
            SketchKind::GaussianDense | SketchKind::RademacherDense => {
                Ok(Sketch::Dense(build_dense_baseline(self, &source)?))
            }
            SketchKind::LessIc | SketchKind::LessIe => unreachable!("rejected by validate"),
        }
    }
}

pub(crate) fn integer_sparsity(pm: f64) -> Option<usize> {
    let s = pm.round();
    if s >= 0.0 && (pm - s).abs() <= 1e-9 * s.max(1.0) {
        Some(s as usize)
    } else {
        None
    }
}

pub(crate) fn check_kwise_range(family: &KWiseFamily, entries: u64) -> Result<()> {
    let last = position_index(entries.saturating_sub(1));
    if entries > 0 && last >= family.modulus() {
        return Err(Error::Range {
            index: last,
            modulus: family.modulus(),
        });
    }
    Ok(())
}

/// Builds a block OSNAP sketch: column `j` is split into `s` blocks of
/// `m / s` rows and each block receives one `+-1` at a uniform row.
pub fn build_osnap(spec: &SketchSpec, source: &RandomSource) -> Result<SparseSketch> {
    if spec.kind != SketchKind::Osnap {
        return Err(Error::param(format!("build_osnap called for kind {}", spec.kind)));
    }
    spec.validate()?;
    let s = spec.sparsity().expect("validated");
    let block = spec.m / s;
    let header = spec.header(source.independence(), source.seed());

    let columns: Vec<Vec<(u32, f64)>> = match source {
        RandomSource::KWise(family) => {
            check_kwise_range(family, (spec.n * s) as u64)?;
            let q = family.modulus();
            (0..spec.n)
                .into_par_iter()
                .map_init(
                    || (Vec::with_capacity(2 * s), Vec::with_capacity(2 * s)),
                    |(idx, h), j| {
                        let base = (j * s) as u64;
                        idx.clear();
                        for g in 0..s as u64 {
                            idx.push(sign_index(base + g));
                            idx.push(position_index(base + g));
                        }
                        family.eval_batch_unchecked(idx, h);
                        (0..s)
                            .map(|g| {
                                let offset = scale_to_width(h[2 * g + 1], block as u64, q) as usize;
                                ((g * block + offset) as u32, sign_of(h[2 * g]) as f64)
                            })
                            .collect()
                    },
                )
                .collect()
        }
        RandomSource::Independent(src) => (0..spec.n)
            .into_par_iter()
            .map(|j| {
                let mut rng = src.column_rng(j);
                (0..s)
                    .map(|g| {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        let offset = rng.random_range(0..block);
                        ((g * block + offset) as u32, sign)
                    })
                    .collect()
            })
            .collect(),
    };
    SparseSketch::from_columns(header, columns)
}

/// Builds an OSE-IE sketch: every entry is independently `+-1` with
/// probability `p` and zero otherwise.
///
/// With fully independent randomness each column draws its nonzero count
/// from `Binomial(m, p)` and then a uniform subset of rows, which has the
/// same law as scanning all `m` Bernoulli cells. With K-wise randomness
/// the cells are scanned, entry `(i, j)` using index `j m + i`.
pub fn build_ose_ie(spec: &SketchSpec, source: &RandomSource) -> Result<SparseSketch> {
    if spec.kind != SketchKind::OseIe {
        return Err(Error::param(format!("build_ose_ie called for kind {}", spec.kind)));
    }
    spec.validate()?;
    let header = spec.header(source.independence(), source.seed());
    let columns = bernoulli_columns(spec.m, spec.n, source, |_| (spec.p, 1.0))?;
    SparseSketch::from_columns(header, columns)
}

/// Columns with independent entries: column `j` keeps each cell with
/// probability `prob_value(j).0` and stores `+-prob_value(j).1`.
pub(crate) fn bernoulli_columns(
    m: usize,
    n: usize,
    source: &RandomSource,
    prob_value: impl Fn(usize) -> (f64, f64) + Sync,
) -> Result<Vec<Vec<(u32, f64)>>> {
    match source {
        RandomSource::KWise(family) => {
            check_kwise_range(family, (m * n) as u64)?;
            let q = family.modulus();
            Ok((0..n)
                .into_par_iter()
                .map_init(
                    || (Vec::with_capacity(m), Vec::with_capacity(m)),
                    |(idx, h), j| {
                        let (prob, value) = prob_value(j);
                        let threshold = ((prob * q as f64).round() as u64).min(q);
                        let base = (j * m) as u64;
                        idx.clear();
                        idx.extend((0..m as u64).map(|i| position_index(base + i)));
                        family.eval_batch_unchecked(idx, h);
                        let kept: Vec<u64> =
                            (0..m as u64).filter(|&i| h[i as usize] < threshold).collect();
                        idx.clear();
                        idx.extend(kept.iter().map(|&i| sign_index(base + i)));
                        family.eval_batch_unchecked(idx, h);
                        kept.iter()
                            .zip(h.iter())
                            .map(|(&i, &hs)| (i as u32, sign_of(hs) as f64 * value))
                            .collect()
                    },
                )
                .collect())
        }
        RandomSource::Independent(src) => (0..n)
            .into_par_iter()
            .map(|j| {
                let (prob, value) = prob_value(j);
                let mut rng = src.column_rng(j);
                let count = if prob >= 1.0 {
                    m
                } else if prob <= 0.0 {
                    0
                } else {
                    Binomial::new(m as u64, prob)
                        .map_err(|e| Error::param(format!("binomial({m}, {prob}): {e}")))?
                        .sample(&mut rng) as usize
                };
                let mut rows = rand::seq::index::sample(&mut rng, m, count).into_vec();
                rows.sort_unstable();
                Ok(rows
                    .into_iter()
                    .map(|i| {
                        let sign = if rng.random::<bool>() { value } else { -value };
                        (i as u32, sign)
                    })
                    .collect())
            })
            .collect(),
    }
}

#[inline]
fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Box-Muller transform of two open-interval uniforms.
#[inline]
pub(crate) fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Dense comparison model with entries of variance `p`: Gaussian entries
/// from the Box-Muller transform of the uniform stream, or `+-sqrt(p)`.
///
/// Entries are numbered column-major, `e = j m + i`. For K-wise randomness
/// the Gaussian pair `(e = 2k, 2k + 1)` uses `u1 = unit(h(2k))`,
/// `u2 = unit(h(2k + 1))`, taking the cosine branch for even `e` and the sine
/// branch for odd `e`; Rademacher entries use `h(sign_index(e))`.
pub fn build_dense_baseline(spec: &SketchSpec, source: &RandomSource) -> Result<DenseSketch> {
    if !spec.kind.is_dense() {
        return Err(Error::param(format!(
            "build_dense_baseline called for kind {}",
            spec.kind
        )));
    }
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let sd = spec.p.sqrt();
    let gaussian = spec.kind == SketchKind::GaussianDense;
    let columns: Vec<Vec<f64>> = match source {
        RandomSource::KWise(family) => {
            check_kwise_range(family, (m * n + 1) as u64)?;
            let q = family.modulus();
            (0..n)
                .into_par_iter()
                .map(|j| {
                    (0..m)
                        .map(|i| {
                            let e = (j * m + i) as u64;
                            if gaussian {
                                let k = e / 2;
                                let u1 = unit_of(family.eval_unchecked(2 * k), q);
                                let u2 = unit_of(family.eval_unchecked(2 * k + 1), q);
                                let (c, s) = box_muller(u1, u2);
                                sd * if e % 2 == 0 { c } else { s }
                            } else {
                                sd * sign_of(family.eval_unchecked(sign_index(e))) as f64
                            }
                        })
                        .collect()
                })
                .collect()
        }
        RandomSource::Independent(src) => (0..n)
            .into_par_iter()
            .map(|j| {
                let mut rng = src.column_rng(j);
                let mut col = Vec::with_capacity(m + 1);
                if gaussian {
                    while col.len() < m {
                        let (c, s) = box_muller(open_unit(&mut rng), open_unit(&mut rng));
                        col.push(sd * c);
                        col.push(sd * s);
                    }
                    col.truncate(m);
                } else {
                    col.extend((0..m).map(|_| if rng.random::<bool>() { sd } else { -sd }));
                }
                col
            })
            .collect(),
    };
    let mut matrix = nalgebra::DMatrix::zeros(m, n);
    for (j, col) in columns.into_iter().enumerate() {
        matrix.column_mut(j).copy_from_slice(&col);
    }
    Ok(DenseSketch {
        header: spec.header(source.independence(), source.seed()),
        matrix,
    })
}

pub(crate) fn check_accuracy(d: usize, eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param(format!("eps = {eps} is outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta = {delta} is outside (0, 1)")));
    }
    if d == 0 {
        return Err(Error::param("subspace dimension d must be at least 1"));
    }
    Ok(())
}

/// Default parameters with the calibrated constants, see
/// [`default_parameters_with`].
pub fn default_parameters(
    d: usize,
    n: usize,
    eps: f64,
    delta: f64,
    kind: SketchKind,
) -> Result<SketchSpec> {
    default_parameters_with(&CALIBRATED, d, n, eps, delta, kind)
}

/// Embedding dimension and sparsity for an `(eps, delta, d)` guarantee:
///
/// * `m = ceil(C_m (d + ln(1/delta)) / eps^2)`, rounded up to a multiple of
///   `s` for OSNAP;
/// * OSNAP: `s = ceil(C_s (L^2 / eps + L^3))` with `L = ln(d / (eps delta))`;
/// * OSE-IE: additionally `s >= C_e L / eps^2`;
/// * `K = 8 ceil(ln(max(d / (eps delta), pm)))`.
///
/// A sparsity that reaches `m` falls back to the dense `p = 1` sketch.
pub fn default_parameters_with(
    cal: &Calibration,
    d: usize,
    n: usize,
    eps: f64,
    delta: f64,
    kind: SketchKind,
) -> Result<SketchSpec> {
    check_accuracy(d, eps, delta)?;
    if d > n {
        return Err(Error::param(format!("subspace dimension {d} exceeds n = {n}")));
    }
    let l = (d as f64 / (eps * delta)).ln();
    let m0 = (cal.c_m * (d as f64 + (1.0 / delta).ln()) / (eps * eps)).ceil().max(1.0) as usize;
    let osnap_s = (cal.c_s * (l * l / eps + l * l * l)).ceil().max(1.0) as usize;
    let (m, s) = match kind {
        SketchKind::Osnap => {
            if osnap_s >= m0 {
                log::warn!("OSNAP sparsity {osnap_s} reaches m = {m0}; using p = 1");
                (m0, m0)
            } else {
                (m0.div_ceil(osnap_s) * osnap_s, osnap_s)
            }
        }
        SketchKind::OseIe => {
            let s = osnap_s.max((cal.c_e * l / (eps * eps)).ceil() as usize);
            if s >= m0 {
                log::warn!("OSE-IE sparsity {s} reaches m = {m0}; using p = 1");
                (m0, m0)
            } else {
                (m0, s)
            }
        }
        SketchKind::GaussianDense | SketchKind::RademacherDense => (m0, m0),
        SketchKind::LessIc | SketchKind::LessIe => {
            return Err(Error::param(
                "use less_default_parameters for leverage-adapted sketches",
            ))
        }
    };
    let independence = match kind {
        SketchKind::Osnap => Independence::KWise {
            degree_k: default_degree(d, eps, delta, s as f64),
        },
        _ => Independence::Full,
    };
    SketchSpec::new(kind, m, n, s as f64 / m as f64, independence, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kwise::IndependentSource;

    fn kwise(k: usize) -> Independence {
        Independence::KWise { degree_k: k }
    }

    #[test]
    fn osnap_small_structure() {
        let spec = SketchSpec::osnap(4, 3, 2, kwise(4), 1).unwrap();
        let sk = build_osnap(&spec, &spec.source().unwrap()).unwrap();
        assert_eq!(sk.nnz(), 6);
        assert!((sk.scale() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        for j in 0..3 {
            let (rows, vals) = sk.column(j);
            assert_eq!(rows.len(), 2);
            assert!(rows[0] < 2 && (2..4).contains(&rows[1]));
            assert!(vals.iter().all(|v| v.abs() == 1.0));
        }
    }

    #[test]
    fn osnap_rejects_non_divisor() {
        let err = SketchSpec::new(SketchKind::Osnap, 4, 3, 0.75, kwise(4), 1).unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
        let err = SketchSpec::new(SketchKind::Osnap, 4, 3, 0.3, kwise(4), 1).unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
        assert!(SketchSpec::osnap(4, 3, 0, kwise(4), 1).is_err());
        assert!(SketchSpec::new(SketchKind::OseIe, 4, 3, 1.5, Independence::Full, 1).is_err());
        assert!(SketchSpec::new(SketchKind::OseIe, 0, 3, 0.5, Independence::Full, 1).is_err());
    }

    #[test]
    fn osnap_deterministic_and_dense_at_p1() {
        for ind in [kwise(8), Independence::Full] {
            let spec = SketchSpec::osnap(16, 40, 4, ind, 77).unwrap();
            let a = build_osnap(&spec, &spec.source().unwrap()).unwrap();
            let b = build_osnap(&spec, &spec.source().unwrap()).unwrap();
            assert_eq!(a, b);
            let other = spec.with_seed(78);
            assert_ne!(a, build_osnap(&other, &other.source().unwrap()).unwrap());
        }
        let spec = SketchSpec::osnap(5, 7, 5, kwise(3), 2).unwrap();
        let sk = build_osnap(&spec, &spec.source().unwrap()).unwrap();
        for j in 0..7 {
            assert_eq!(sk.column(j).0, &[0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn osnap_kwise_uses_domain_separated_indices() {
        let spec = SketchSpec::osnap(6, 2, 3, kwise(5), 9).unwrap();
        let RandomSource::KWise(fam) = spec.source().unwrap() else { unreachable!() };
        let sk = build_osnap(&spec, &RandomSource::KWise(fam.clone())).unwrap();
        for j in 0..2 {
            let (rows, vals) = sk.column(j);
            for g in 0..3 {
                let k = (j * 3 + g) as u64;
                assert_eq!(vals[g], fam.rademacher_at(sign_index(k)).unwrap() as f64);
                let row = fam
                    .uniform_range_at(position_index(k), (2 * g) as i64, (2 * g + 1) as i64)
                    .unwrap();
                assert_eq!(rows[g] as i64, row);
            }
        }
    }

    #[test]
    fn kwise_range_overflow_is_reported() {
        let spec = SketchSpec::osnap(4, 3, 2, kwise(2), 1).unwrap();
        let tiny = RandomSource::KWise(KWiseFamily::new(1, 2, 7).unwrap());
        assert!(matches!(build_osnap(&spec, &tiny), Err(Error::Range { .. })));
    }

    #[test]
    fn ose_ie_dense_at_p1() {
        for ind in [kwise(4), Independence::Full] {
            let spec = SketchSpec::new(SketchKind::OseIe, 9, 5, 1.0, ind, 3).unwrap();
            let sk = build_ose_ie(&spec, &spec.source().unwrap()).unwrap();
            assert_eq!(sk.nnz(), 45);
            assert!(sk.values().iter().all(|v| v.abs() == 1.0));
        }
    }

    /// Naive cell-by-cell scan, the reference law for the binomial shortcut.
    fn ose_ie_scan_column(m: usize, p: f64, src: &IndependentSource, j: usize) -> Vec<u32> {
        let mut rng = src.column_rng(j);
        (0..m as u32)
            .filter(|_| {
                let keep = rng.random::<f64>() < p;
                let _sign: bool = rng.random();
                keep
            })
            .collect()
    }

    #[test]
    fn binomial_shortcut_matches_cell_scan_law() {
        // m = 3, p = 0.3: each of the 8 support patterns has probability
        // p^k (1-p)^(3-k). Both generators must match within 4 SE.
        let (m, p, cols) = (3usize, 0.3, 40_000usize);
        let src = IndependentSource::new(2024);
        let spec = SketchSpec::new(SketchKind::OseIe, m, cols, p, Independence::Full, 2024).unwrap();
        let fast = build_ose_ie(&spec, &RandomSource::Independent(src)).unwrap();
        let slow_src = IndependentSource::new(99);
        let mut fast_counts = [0usize; 8];
        let mut slow_counts = [0usize; 8];
        for j in 0..cols {
            let code = |rows: &[u32]| rows.iter().map(|r| 1usize << r).sum::<usize>();
            fast_counts[code(fast.column(j).0)] += 1;
            slow_counts[code(&ose_ie_scan_column(m, p, &slow_src, j))] += 1;
        }
        for code in 0..8usize {
            let k = code.count_ones() as i32;
            let prob = p.powi(k) * (1.0 - p).powi(3 - k);
            let se = (prob * (1.0 - prob) / cols as f64).sqrt();
            for counts in [&fast_counts, &slow_counts] {
                let freq = counts[code] as f64 / cols as f64;
                assert!((freq - prob).abs() < 4.0 * se, "pattern {code}: {freq} vs {prob}");
            }
        }
    }

    #[test]
    fn ose_ie_column_counts_binomial() {
        // m = 400, p = 0.25: count within 100 +- 4 sqrt(400 * 0.25 * 0.75).
        let spec = SketchSpec::new(SketchKind::OseIe, 400, 1, 0.25, Independence::Full, 0).unwrap();
        for seed in 0..50 {
            let sk = build_ose_ie(&spec.with_seed(seed), &RandomSource::Independent(IndependentSource::new(seed))).unwrap();
            let c = sk.nnz() as f64;
            assert!((c - 100.0).abs() <= 4.0 * 75f64.sqrt(), "count {c}");
        }
        let spec = SketchSpec::new(SketchKind::OseIe, 400, 30, 0.25, kwise(6), 5).unwrap();
        let sk = build_ose_ie(&spec, &spec.source().unwrap()).unwrap();
        for j in 0..30 {
            let c = sk.column(j).0.len() as f64;
            assert!((c - 100.0).abs() <= 4.0 * 75f64.sqrt(), "count {c}");
        }
    }

    #[test]
    fn dense_baselines() {
        for ind in [kwise(4), Independence::Full] {
            let spec = SketchSpec::new(SketchKind::RademacherDense, 7, 5, 0.25, ind, 1).unwrap();
            let d = build_dense_baseline(&spec, &spec.source().unwrap()).unwrap();
            assert!(d.matrix.iter().all(|v| v.abs() == 0.5));

            let spec = SketchSpec::new(SketchKind::GaussianDense, 100, 100, 1.0, ind, 1).unwrap();
            let g = build_dense_baseline(&spec, &spec.source().unwrap()).unwrap();
            let n = g.matrix.len() as f64;
            let mean = g.matrix.iter().sum::<f64>() / n;
            let var = g.matrix.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            // Var of sample variance for N(0,1) is 2 / n.
            assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "var {var}");
            assert!(mean.abs() < 4.0 / n.sqrt());
        }
        let spec = SketchSpec::osnap(4, 4, 2, kwise(2), 0).unwrap();
        assert!(build_dense_baseline(&spec, &spec.source().unwrap()).is_err());
    }

    #[test]
    fn box_muller_is_pinned() {
        let (c, s) = box_muller(0.5, 0.25);
        let r = (2.0 * 2f64.ln()).sqrt();
        assert!((c - r * (std::f64::consts::FRAC_PI_2).cos()).abs() < 1e-15);
        assert!((s - r).abs() < 1e-15);
    }

    #[test]
    fn default_parameter_arithmetic() {
        let cal = Calibration { c_m: 16.0, c_s: 1.0 / 64.0, c_e: 1.0, c_l: 1.0 };
        let spec = default_parameters_with(&cal, 16, 4096, 0.5, 0.01, SketchKind::Osnap).unwrap();
        // m0 = ceil(16 (16 + ln 100) / 0.25) = ceil(1318.72) = 1319
        let m0 = (16.0 * (16.0 + 100f64.ln()) / 0.25_f64).ceil() as usize;
        assert_eq!(m0, 1319);
        let l = (16.0f64 / 0.005).ln();
        let s = (cal.c_s * (l * l / 0.5 + l.powi(3))).ceil() as usize;
        assert_eq!(spec.sparsity(), Some(s));
        assert_eq!(spec.m, m0.div_ceil(s) * s);
        assert!(spec.m - m0 < s);
        assert_eq!(spec.independence.degree_k(), Some(8 * (3200f64).ln().ceil() as usize));
    }

    #[test]
    fn default_parameters_fall_back_to_dense() {
        let cal = Calibration { c_m: 1.0, c_s: 1.0, c_e: 1.0, c_l: 1.0 };
        let spec = default_parameters_with(&cal, 2, 100, 0.9, 1e-6, SketchKind::Osnap).unwrap();
        assert_eq!(spec.p, 1.0);
        let spec = default_parameters_with(&cal, 2, 100, 0.9, 1e-6, SketchKind::OseIe).unwrap();
        assert_eq!(spec.p, 1.0);
    }

    #[test]
    fn sparsity_scales_like_inverse_eps() {
        let a = default_parameters(16, 1 << 16, 0.2, 0.05, SketchKind::Osnap).unwrap();
        let b = default_parameters(16, 1 << 16, 0.1, 0.05, SketchKind::Osnap).unwrap();
        let ratio = b.pm() / a.pm();
        assert!(ratio > 1.0 && ratio < 2.5, "osnap ratio {ratio}");
        let a = default_parameters(16, 1 << 16, 0.2, 0.05, SketchKind::OseIe).unwrap();
        let b = default_parameters(16, 1 << 16, 0.1, 0.05, SketchKind::OseIe).unwrap();
        let ratio_ie = b.pm() / a.pm();
        assert!(ratio_ie > ratio, "ose-ie ratio {ratio_ie}");
    }

    #[test]
    fn default_parameters_validate_inputs() {
        assert!(default_parameters(16, 8, 0.5, 0.05, SketchKind::Osnap).is_err());
        assert!(default_parameters(16, 100, 1.5, 0.05, SketchKind::Osnap).is_err());
        assert!(default_parameters(16, 100, 0.5, 0.0, SketchKind::Osnap).is_err());
        assert!(default_parameters(16, 100, 0.5, 0.05, SketchKind::LessIc).is_err());
    }
}
