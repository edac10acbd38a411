//! End-to-end fast subspace embedding: approximate leverage scores, LESS-IC
//! parameters, sketch construction and application.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::apply::apply;
use crate::diagnostics::{distortion_of_product, DistortionReport};
use crate::error::{Error, Result};
use crate::kwise::{default_degree, derive_seed, Independence, RandomSource};
use crate::less::{build_less_ic, build_less_ie, less_default_parameters, LessIcSpec};
use crate::leverage::{approx_leverage, orthonormal_basis, LeverageScores};
use crate::matrix::TallMatrix;
use crate::oblivious::{build_dense_baseline, build_ose_ie, build_osnap, check_accuracy, default_parameters, SketchSpec};
use crate::sketch::{Sketch, SketchKind};

/// Explicit replacements for the default `m`, `pm` and `K`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub m: Option<usize>,
    pub pm: Option<f64>,
    pub degree_k: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub eps: f64,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub kind: SketchKind,
    #[serde(default)]
    pub overrides: Overrides,
    /// Measure the distortion of the result against an exact orthonormal
    /// basis of `A` (costs a QR factorization of `A`).
    #[serde(default)]
    pub validate: bool,
}

impl PipelineConfig {
    pub fn new(eps: f64, delta: f64, gamma: f64, seed: u64, kind: SketchKind) -> Self {
        Self {
            eps,
            delta,
            gamma,
            seed,
            kind,
            overrides: Overrides::default(),
            validate: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param(format!("gamma = {} is outside (0, 1)", self.gamma)));
        }
        if let Some(0) = self.overrides.m {
            return Err(Error::param("override m must be at least 1"));
        }
        if let Some(pm) = self.overrides.pm {
            if !(pm > 0.0) {
                return Err(Error::param(format!("override pm = {pm} must be positive")));
            }
        }
        if let Some(0) = self.overrides.degree_k {
            return Err(Error::param("override K must be at least 1"));
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub leverage: f64,
    pub parameters: f64,
    pub build: f64,
    pub apply: f64,
    pub validate: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.leverage + self.parameters + self.build + self.apply + self.validate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind_requested: SketchKind,
    /// Differs from the request when LESS-IC falls back to a dense OSNAP.
    pub kind_used: SketchKind,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub pm: f64,
    pub independence: Independence,
    pub nnz_a: usize,
    pub sketch_nnz: usize,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    /// `n + 4 beta1 beta2 p m d` for LESS-IC.
    pub nnz_bound: Option<f64>,
    pub nnz_within_bound: Option<bool>,
    /// `n^gamma d^2 / eps > nnz(A)`: the sketch term dominates the input
    /// sparsity term in the cost.
    pub sketch_term_dominates: bool,
    pub timings: StageTimings,
    pub validation: Option<DistortionReport>,
}

fn with_independence(independence: Independence, degree_k: Option<usize>) -> Independence {
    match (independence, degree_k) {
        (Independence::KWise { .. }, Some(k)) => Independence::KWise { degree_k: k },
        (ind, _) => ind,
    }
}

fn oblivious_spec(config: &PipelineConfig, kind: SketchKind, n: usize, d: usize) -> Result<SketchSpec> {
    let ov = config.overrides;
    let base = default_parameters(d, n, config.eps, config.delta, kind)?;
    if ov.m.is_none() && ov.pm.is_none() && ov.degree_k.is_none() {
        return Ok(base.with_seed(derive_seed(config.seed, 1)));
    }
    let m = ov.m.unwrap_or(base.m);
    let pm = ov.pm.unwrap_or(if kind.is_dense() { m as f64 } else { base.pm() });
    let independence = match base.independence {
        Independence::KWise { .. } => Independence::KWise {
            degree_k: ov
                .degree_k
                .unwrap_or_else(|| default_degree(d, config.eps, config.delta, pm)),
        },
        Independence::Full => Independence::Full,
    };
    SketchSpec::new(kind, m, n, pm / m as f64, independence, derive_seed(config.seed, 1))
}

fn less_spec(config: &PipelineConfig, scores: LeverageScores, d: usize) -> Result<LessIcSpec> {
    let ov = config.overrides;
    let mut spec = less_default_parameters(d, config.eps, config.delta, scores)?;
    if ov.m.is_some() || ov.pm.is_some() {
        let m = ov.m.unwrap_or(spec.m);
        let pm = ov.pm.unwrap_or(spec.pm()).min(m as f64);
        spec.m = m;
        spec.p = pm / m as f64;
        if ov.degree_k.is_none() {
            spec.independence = Independence::KWise {
                degree_k: default_degree(d, config.eps, config.delta, pm),
            };
        }
    }
    spec.independence = with_independence(spec.independence, ov.degree_k);
    spec.seed = derive_seed(config.seed, 1);
    spec.validate()?;
    Ok(spec)
}

/// Computes `A~ = Pi A` with `m = O(d / eps^2)` rows.
///
/// LESS kinds first estimate leverage scores with [`approx_leverage`]
/// (seed `derive_seed(seed, 0)`); every kind draws its sketch from
/// `derive_seed(seed, 1)`.
pub fn fast_subspace_embed(a: &TallMatrix, config: &PipelineConfig) -> Result<(TallMatrix, RunReport)> {
    let start = Instant::now();
    let mut timings = StageTimings::default();
    config.check()?;
    let (n, d) = (a.nrows(), a.ncols());
    check_accuracy(d, config.eps, config.delta)?;
    if d > n {
        return Err(Error::dim(format!("A is {n}x{d}; expected n >= d")));
    }

    let mut scores = None;
    if matches!(config.kind, SketchKind::LessIc | SketchKind::LessIe) {
        let t = Instant::now();
        scores = Some(approx_leverage(a, config.gamma, derive_seed(config.seed, 0))?);
        timings.leverage = t.elapsed().as_secs_f64();
    }

    let t = Instant::now();
    enum Plan {
        Oblivious(SketchSpec),
        LessIc(LessIcSpec),
        LessIe(LessIcSpec),
    }
    let plan = match (config.kind, scores.clone()) {
        (SketchKind::LessIc, Some(z)) => {
            let spec = less_spec(config, z, d)?;
            if spec.p >= 1.0 {
                log::warn!("LESS-IC needs p = 1; using a dense OSNAP with s = m = {}", spec.m);
                Plan::Oblivious(SketchSpec::osnap(spec.m, n, spec.m, spec.independence, spec.seed)?)
            } else {
                Plan::LessIc(spec)
            }
        }
        (SketchKind::LessIe, Some(z)) => {
            let mut spec = less_spec(config, z, d)?;
            if config.overrides.degree_k.is_none() {
                spec.independence = Independence::Full;
            }
            Plan::LessIe(spec)
        }
        (kind, _) => Plan::Oblivious(oblivious_spec(config, kind, n, d)?),
    };
    timings.parameters = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (sketch, nnz_bound) = match &plan {
        Plan::Oblivious(spec) => {
            let source = spec.source()?;
            let sketch = match spec.kind {
                SketchKind::Osnap => Sketch::Sparse(build_osnap(spec, &source)?),
                SketchKind::OseIe => Sketch::Sparse(build_ose_ie(spec, &source)?),
                _ => Sketch::Dense(build_dense_baseline(spec, &source)?),
            };
            (sketch, None)
        }
        Plan::LessIc(spec) => (Sketch::Sparse(build_less_ic(spec, &spec.source()?)?), Some(spec.nnz_bound())),
        Plan::LessIe(spec) => {
            let source = RandomSource::from_independence(spec.independence, spec.seed)?;
            (Sketch::Sparse(build_less_ie(&spec.scores, spec.p, spec.m, &source)?), None)
        }
    };
    timings.build = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let embedded = match &sketch {
        Sketch::Sparse(s) => apply(s, a)?,
        Sketch::Dense(s) => TallMatrix::from_dmatrix(&(s.scaled() * a.to_dmatrix())),
    };
    timings.apply = t.elapsed().as_secs_f64();

    let mut validation = None;
    if config.validate {
        let t = Instant::now();
        let (_, r) = orthonormal_basis(&a.to_dmatrix())?;
        // X = A~ R^{-1} = Pi Q, via R^T X^T = A~^T.
        let xt = r
            .transpose()
            .solve_lower_triangular(&embedded.to_dmatrix().transpose())
            .ok_or(Error::RankDeficient { rank: 0, cols: d })?;
        validation = Some(distortion_of_product(&xt.transpose(), config.eps));
        timings.validate = t.elapsed().as_secs_f64();
    }

    let header = sketch.header().clone();
    let sketch_nnz = match &sketch {
        Sketch::Sparse(s) => s.nnz(),
        Sketch::Dense(s) => s.matrix.iter().filter(|v| **v != 0.0).count(),
    };
    let nnz_a = a.nnz();
    timings.total = start.elapsed().as_secs_f64();
    let report = RunReport {
        kind_requested: config.kind,
        kind_used: header.kind,
        n,
        d,
        m: header.m,
        pm: header.p * header.m as f64,
        independence: header.independence,
        nnz_a,
        sketch_nnz,
        beta1: scores.as_ref().map(|s| s.beta1),
        beta2: scores.as_ref().map(|s| s.beta2),
        nnz_bound,
        nnz_within_bound: nnz_bound.map(|b| sketch_nnz as f64 <= b),
        sketch_term_dominates: (n as f64).powf(config.gamma) * (d * d) as f64 / config.eps > nnz_a as f64,
        timings,
        validation,
    };
    Ok((embedded, report))
}

/// Distortion of `A~` against an exact orthonormal basis of `A`.
pub fn embedding_distortion(a: &TallMatrix, embedded: &DMatrix<f64>, eps: f64) -> Result<DistortionReport> {
    let (_, r) = orthonormal_basis(&a.to_dmatrix())?;
    let xt = r
        .transpose()
        .solve_lower_triangular(&embedded.transpose())
        .ok_or(Error::RankDeficient { rank: 0, cols: a.ncols() })?;
    Ok(distortion_of_product(&xt.transpose(), eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::haar_basis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthonormal(n: usize, d: usize, seed: u64) -> TallMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TallMatrix::from_dmatrix(&haar_basis(n, d, &mut rng))
    }

    #[test]
    fn less_ic_pipeline_reports() {
        let a = orthonormal(3000, 8, 1);
        let mut config = PipelineConfig::new(0.5, 0.1, 0.5, 7, SketchKind::LessIc);
        config.validate = true;
        let (out, report) = fast_subspace_embed(&a, &config).unwrap();
        assert_eq!(out.nrows(), report.m);
        assert_eq!(out.ncols(), 8);
        assert!(report.beta1.is_some() && report.nnz_within_bound.is_some());
        assert!(report.validation.is_some());
        let again = fast_subspace_embed(&a, &config).unwrap().0;
        assert_eq!(out, again);
        let v = embedding_distortion(&a, &out.to_dmatrix(), 0.5).unwrap();
        assert_eq!(Some(v), report.validation);
    }

    #[test]
    fn oblivious_kinds_skip_leverage() {
        let a = orthonormal(500, 4, 2);
        for kind in [SketchKind::GaussianDense, SketchKind::Osnap, SketchKind::OseIe] {
            let config = PipelineConfig::new(0.5, 0.1, 0.5, 3, kind);
            let (_, report) = fast_subspace_embed(&a, &config).unwrap();
            assert_eq!(report.timings.leverage, 0.0);
            assert!(report.beta1.is_none());
            assert_eq!(report.kind_used, kind);
        }
    }

    #[test]
    fn overrides_are_applied_and_checked() {
        let a = orthonormal(400, 4, 3);
        let mut config = PipelineConfig::new(0.5, 0.1, 0.5, 3, SketchKind::Osnap);
        config.overrides = Overrides { m: Some(60), pm: Some(4.0), degree_k: Some(5) };
        let (_, report) = fast_subspace_embed(&a, &config).unwrap();
        assert_eq!((report.m, report.pm), (60, 4.0));
        assert_eq!(report.independence, Independence::KWise { degree_k: 5 });
        config.overrides.pm = Some(7.0);
        assert!(matches!(fast_subspace_embed(&a, &config), Err(Error::Structural(_))));
        config.gamma = 1.0;
        assert!(fast_subspace_embed(&a, &config).is_err());
    }

    #[test]
    fn less_ic_falls_back_to_dense_osnap() {
        let a = orthonormal(400, 4, 4);
        let mut config = PipelineConfig::new(0.5, 0.1, 0.5, 3, SketchKind::LessIc);
        config.overrides = Overrides { m: Some(40), pm: Some(40.0), degree_k: None };
        let (_, report) = fast_subspace_embed(&a, &config).unwrap();
        assert_eq!(report.kind_used, SketchKind::Osnap);
        assert_eq!(report.sketch_nnz, 400 * 40);
    }
}
