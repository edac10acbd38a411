//! Empirical checks of embedding quality and of the second-moment
//! identities.
//!
//! Every Monte-Carlo routine derives trial `i`'s randomness from
//! `derive_seed(master, i)`: the subspace sampler uses
//! `derive_seed(trial, 0)` and sketches use `derive_seed(trial, 1)` (and
//! `derive_seed(trial, 2)` for the independent copy in decoupled moments).
//! Trials run on the rayon pool and are reduced in trial order, so results
//! do not depend on the thread count.

mod distortion;
mod moments;
mod sampler;
mod trial;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apply::unscaled_product;
use crate::error::{Error, Result};
use crate::kwise::{derive_seed, Independence, RandomSource};
use crate::less::{build_less_ic, build_less_ie, LessIcSpec};
use crate::leverage::LeverageScores;
use crate::oblivious::SketchSpec;
use crate::sketch::{DenseSketch, Sketch, SparseSketch};

pub use distortion::{check_orthonormal, distortion, distortion_of_product, DistortionReport};
pub use moments::{
    decoupled_gamma_moment, diagonal_moment, diagonal_offdiagonal_split, gaussian_reference,
    normalized_trace_power, trace_moment, DiagonalSplit, GaussianBand, MomentProbe,
};
pub use sampler::{coordinate_basis, haar_basis, spiked_basis, SubspaceSampler};
pub use trial::{embedding_trial, embedding_trial_until, Quantiles, TrialSummary};

/// A realized embedding `Pi = scale * S`.
pub trait Embedding {
    fn m(&self) -> usize;
    fn n(&self) -> usize;
    fn scale(&self) -> f64;
    /// `p m`, the expected column energy of `S`.
    fn pm(&self) -> f64;
    /// `S U` for a dense `n x d` matrix `U`.
    fn unscaled_product(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    /// `sum_i S_ij^2` for each column `j`.
    fn column_energies(&self) -> Vec<f64>;
}

impl Embedding for SparseSketch {
    fn m(&self) -> usize {
        SparseSketch::m(self)
    }
    fn n(&self) -> usize {
        SparseSketch::n(self)
    }
    fn scale(&self) -> f64 {
        SparseSketch::scale(self)
    }
    fn pm(&self) -> f64 {
        self.p() * SparseSketch::m(self) as f64
    }
    fn unscaled_product(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        unscaled_product(self, u)
    }
    fn column_energies(&self) -> Vec<f64> {
        SparseSketch::column_energies(self)
    }
}

impl Embedding for DenseSketch {
    fn m(&self) -> usize {
        self.header.m
    }
    fn n(&self) -> usize {
        self.header.n
    }
    fn scale(&self) -> f64 {
        self.header.scale
    }
    fn pm(&self) -> f64 {
        self.header.p * self.header.m as f64
    }
    fn unscaled_product(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if u.nrows() != self.header.n {
            return Err(Error::dim(format!(
                "sketch has {} columns but U has {} rows",
                self.header.n,
                u.nrows()
            )));
        }
        Ok(&self.matrix * u)
    }
    fn column_energies(&self) -> Vec<f64> {
        DenseSketch::column_energies(self)
    }
}

impl Embedding for Sketch {
    fn m(&self) -> usize {
        self.header().m
    }
    fn n(&self) -> usize {
        self.header().n
    }
    fn scale(&self) -> f64 {
        self.header().scale
    }
    fn pm(&self) -> f64 {
        self.header().p * self.header().m as f64
    }
    fn unscaled_product(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Sketch::Sparse(s) => s.unscaled_product(u),
            Sketch::Dense(s) => s.unscaled_product(u),
        }
    }
    fn column_energies(&self) -> Vec<f64> {
        match self {
            Sketch::Sparse(s) => Embedding::column_energies(s),
            Sketch::Dense(s) => Embedding::column_energies(s),
        }
    }
}

/// Leverage scores handed to a LESS model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreChoice {
    /// Squared row norms of the sampled orthonormal `U`.
    Exact,
    /// `z_i = d / n`.
    Uniform,
}

impl ScoreChoice {
    fn scores(&self, u: &DMatrix<f64>) -> Result<LeverageScores> {
        match self {
            ScoreChoice::Exact => Ok(LeverageScores::from_orthonormal(u)),
            ScoreChoice::Uniform => LeverageScores::uniform(u.nrows(), u.ncols()),
        }
    }
}

/// A recipe for drawing sketches; LESS models adapt to the subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "model")]
pub enum SketchModel {
    Oblivious {
        spec: SketchSpec,
    },
    LessIc {
        m: usize,
        p: f64,
        scores: ScoreChoice,
        independence: Independence,
    },
    LessIe {
        m: usize,
        p: f64,
        scores: ScoreChoice,
        independence: Independence,
    },
}

impl SketchModel {
    pub fn oblivious(spec: SketchSpec) -> Self {
        SketchModel::Oblivious { spec }
    }

    pub fn m(&self) -> usize {
        match self {
            SketchModel::Oblivious { spec } => spec.m,
            SketchModel::LessIc { m, .. } | SketchModel::LessIe { m, .. } => *m,
        }
    }

    /// Draws a sketch for subspace `u` from `seed`.
    pub fn realize(&self, u: &DMatrix<f64>, seed: u64) -> Result<Sketch> {
        match self {
            SketchModel::Oblivious { spec } => {
                if spec.n != u.nrows() {
                    return Err(Error::dim(format!(
                        "sketch has {} columns but U has {} rows",
                        spec.n,
                        u.nrows()
                    )));
                }
                spec.with_seed(seed).build()
            }
            SketchModel::LessIc {
                m,
                p,
                scores,
                independence,
            } => {
                let spec = LessIcSpec::new(*m, *p, scores.scores(u)?, *independence, seed)?;
                Ok(Sketch::Sparse(build_less_ic(&spec, &spec.source()?)?))
            }
            SketchModel::LessIe {
                m,
                p,
                scores,
                independence,
            } => {
                let source = RandomSource::from_independence(*independence, seed)?;
                Ok(Sketch::Sparse(build_less_ie(&scores.scores(u)?, *p, *m, &source)?))
            }
        }
    }
}

/// Seed of trial `i` under master seed `seed`.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Runs `f(i, trial_seed)` for `range` on the rayon pool, in order.
pub(crate) fn run_trials<T: Send>(
    range: std::ops::Range<usize>,
    seed: u64,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    range
        .into_par_iter()
        .map(|i| f(i, trial_seed(seed, i)))
        .collect()
}

/// Mean and standard error of the mean.
pub(crate) fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
