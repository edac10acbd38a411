use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of orthonormal test bases `U` (`n x d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SubspaceSampler {
    /// Uniformly random subspace.
    Haar,
    /// Span of `d` distinct standard basis vectors.
    Coordinate,
    /// One standard basis vector plus a random complement.
    Spiked,
    /// The same basis every trial.
    #[serde(skip)]
    Fixed(DMatrix<f64>),
}

impl SubspaceSampler {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, d: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        if d == 0 || d > n {
            return Err(Error::param(format!("need 1 <= d <= n, got d = {d}, n = {n}")));
        }
        Ok(match self {
            SubspaceSampler::Haar => haar_basis(n, d, rng),
            SubspaceSampler::Coordinate => coordinate_basis(n, d, rng),
            SubspaceSampler::Spiked => spiked_basis(n, d, rng),
            SubspaceSampler::Fixed(u) => {
                if u.shape() != (n, d) {
                    return Err(Error::dim(format!(
                        "fixed basis is {}x{}, expected {n}x{d}",
                        u.nrows(),
                        u.ncols()
                    )));
                }
                u.clone()
            }
        })
    }
}

fn gaussian<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

/// Q factor of `g` with the signs fixed so that `R` has a positive
/// diagonal, which makes `Q` Haar distributed when `g` is Gaussian.
fn signed_q(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn haar_basis<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    signed_q(gaussian(n, d, rng))
}

pub fn coordinate_basis<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let rows = rand::seq::index::sample(rng, n, d);
    let mut u = DMatrix::zeros(n, d);
    for (j, i) in rows.iter().enumerate() {
        u[(i, j)] = 1.0;
    }
    u
}

pub fn spiked_basis<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let spike = rng.random_range(0..n);
    let mut g = gaussian(n, d, rng);
    g.column_mut(0).fill(0.0);
    g[(spike, 0)] = 1.0;
    signed_q(g)
}
