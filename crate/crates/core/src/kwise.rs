//! Seeded K-wise independent randomness.
//!
//! A [`KWiseFamily`] is a random polynomial of degree `K - 1` over a prime
//! field `F_q`. Evaluations at any `K` distinct points are jointly uniform on
//! `F_q^K`, so signs and block positions derived from them are K-wise
//! independent (up to a bias of at most `range / q` from the mapping onto a
//! smaller range). Only the `K` coefficients are stored.
//!
//! Coefficients are expanded from the seed with the SplitMix64 output
//! function applied in counter mode:
//!
//! ```text
//! c_i = splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15) mod q
//! splitmix64(z) = let z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!                 let z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!                 z ^ (z >> 31)
//! ```
//!
//! Signs and positions of one sketch entry are read from disjoint halves of
//! the index space: even indices (`2k`) carry signs and odd indices
//! (`2k + 1`) carry positions, see [`sign_index`] and [`position_index`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The Mersenne prime 2^61 - 1, the default field modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output permutation.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the `counter`-th child seed of `seed`. Used for per-trial and
/// per-stage seeds so that experiments are reproducible and order-free.
#[inline]
pub fn derive_seed(seed: u64, counter: u64) -> u64 {
    splitmix64(seed ^ splitmix64(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Index carrying the sign of the `k`-th entry.
#[inline]
pub fn sign_index(k: u64) -> u64 {
    2 * k
}

/// Index carrying the position of the `k`-th entry.
#[inline]
pub fn position_index(k: u64) -> u64 {
    2 * k + 1
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
fn mul_mod_m61(a: u64, b: u64) -> u64 {
    let prod = a as u128 * b as u128;
    let r = (prod as u64 & MERSENNE_61) + (prod >> 61) as u64;
    let r = (r & MERSENNE_61) + (r >> 61);
    if r >= MERSENNE_61 {
        r - MERSENNE_61
    } else {
        r
    }
}

#[inline]
fn add_mod_m61(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= MERSENNE_61 {
        s - MERSENNE_61
    } else {
        s
    }
}

/// A seeded degree-(K-1) polynomial hash over `F_q`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KWiseFamily {
    seed: u64,
    modulus: u64,
    /// Ascending powers: `h(x) = c[0] + c[1] x + ... + c[K-1] x^(K-1)`.
    coefficients: Vec<u64>,
}

impl KWiseFamily {
    pub fn new(seed: u64, degree_k: usize, modulus: u64) -> Result<Self> {
        if degree_k == 0 {
            return Err(Error::param("independence degree K must be at least 1"));
        }
        check_modulus(modulus)?;
        let coefficients = (0..degree_k as u64)
            .map(|i| splitmix64(seed.wrapping_add((i + 1).wrapping_mul(GOLDEN_GAMMA))) % modulus)
            .collect();
        Ok(Self {
            seed,
            modulus,
            coefficients,
        })
    }

    /// Family over the default Mersenne field.
    pub fn mersenne(seed: u64, degree_k: usize) -> Result<Self> {
        Self::new(seed, degree_k, MERSENNE_61)
    }

    /// Builds the family with explicit coefficients (ascending powers). Used
    /// to enumerate every member of a small family exhaustively.
    pub fn from_coefficients(coefficients: Vec<u64>, modulus: u64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::param("independence degree K must be at least 1"));
        }
        check_modulus(modulus)?;
        if let Some(c) = coefficients.iter().find(|&&c| c >= modulus) {
            return Err(Error::param(format!(
                "coefficient {c} is not a field element mod {modulus}"
            )));
        }
        Ok(Self {
            seed: 0,
            modulus,
            coefficients,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn degree_k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coefficients
    }

    fn check_index(&self, index: u64) -> Result<()> {
        if index >= self.modulus {
            Err(Error::Range {
                index,
                modulus: self.modulus,
            })
        } else {
            Ok(())
        }
    }

    /// Field element `h(index)`.
    pub fn eval(&self, index: u64) -> Result<u64> {
        self.check_index(index)?;
        Ok(self.eval_unchecked(index))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: u64) -> u64 {
        let mut coeffs = self.coefficients.iter().rev();
        let mut acc = *coeffs.next().expect("K >= 1");
        if self.modulus == MERSENNE_61 {
            for &c in coeffs {
                acc = add_mod_m61(mul_mod_m61(acc, x), c);
            }
        } else {
            let q = self.modulus as u128;
            for &c in coeffs {
                acc = ((acc as u128 * x as u128 + c as u128) % q) as u64;
            }
        }
        acc
    }

    /// Evaluates four points at once. The four Horner chains are independent,
    /// which roughly quadruples throughput on the Mersenne path.
    #[inline]
    pub(crate) fn eval4_unchecked(&self, x: [u64; 4]) -> [u64; 4] {
        if self.modulus != MERSENNE_61 {
            return x.map(|xi| self.eval_unchecked(xi));
        }
        let mut coeffs = self.coefficients.iter().rev();
        let top = *coeffs.next().expect("K >= 1");
        let mut acc = [top; 4];
        for &c in coeffs {
            for lane in 0..4 {
                acc[lane] = add_mod_m61(mul_mod_m61(acc[lane], x[lane]), c);
            }
        }
        acc
    }

    /// Evaluates `h` at every index of `xs` into `out`. Indices must already
    /// be range-checked by the caller.
    pub(crate) fn eval_batch_unchecked(&self, xs: &[u64], out: &mut Vec<u64>) {
        out.clear();
        out.reserve(xs.len());
        let mut chunks = xs.chunks_exact(4);
        for chunk in &mut chunks {
            out.extend_from_slice(&self.eval4_unchecked([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        out.extend(chunks.remainder().iter().map(|&x| self.eval_unchecked(x)));
    }

    /// Rademacher sign from the low bit of `h(index)`: even maps to +1.
    /// For odd `q` the bias is exactly `1 / (2q)` towards +1.
    pub fn rademacher_at(&self, index: u64) -> Result<i8> {
        Ok(sign_of(self.eval(index)?))
    }

    /// Maps `h(index)` onto `[lo, hi]` by fixed-point scaling,
    /// `lo + floor(h * (hi - lo + 1) / q)`.
    pub fn uniform_range_at(&self, index: u64, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::param(format!("empty range [{lo}, {hi}]")));
        }
        let width = (hi as i128 - lo as i128 + 1) as u128;
        if width > self.modulus as u128 {
            return Err(Error::param(format!(
                "range of width {width} exceeds field modulus {}",
                self.modulus
            )));
        }
        let h = self.eval(index)?;
        Ok(lo + scale_to_width(h, width as u64, self.modulus) as i64)
    }

    /// `(h(index) + 1/2) / q`, a uniform value in the open unit interval.
    pub fn unit_at(&self, index: u64) -> Result<f64> {
        Ok(unit_of(self.eval(index)?, self.modulus))
    }
}

fn check_modulus(modulus: u64) -> Result<()> {
    if modulus < 2 || !is_prime(modulus) {
        return Err(Error::param(format!("field modulus {modulus} is not a prime")));
    }
    if modulus > MERSENNE_61 {
        return Err(Error::param(format!(
            "field modulus {modulus} exceeds 2^61 - 1"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn sign_of(h: u64) -> i8 {
    if h & 1 == 0 {
        1
    } else {
        -1
    }
}

#[inline]
pub(crate) fn scale_to_width(h: u64, width: u64, modulus: u64) -> u64 {
    ((h as u128 * width as u128) / modulus as u128) as u64
}

#[inline]
pub(crate) fn unit_of(h: u64, modulus: u64) -> f64 {
    (h as f64 + 0.5) / modulus as f64
}

/// Independence model of a sketch's random variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Independence {
    /// Polynomial family over the Mersenne field with the given degree K.
    KWise { degree_k: usize },
    /// Fully independent draws from a seeded ChaCha8 stream per column.
    Full,
}

impl Independence {
    pub fn degree_k(&self) -> Option<usize> {
        match self {
            Independence::KWise { degree_k } => Some(*degree_k),
            Independence::Full => None,
        }
    }
}

/// Fully independent randomness: column `j` reads stream `j` of a ChaCha8
/// generator keyed by the seed, so columns can be drawn in any order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndependentSource {
    seed: u64,
}

impl IndependentSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn column_rng(&self, column: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(column as u64);
        rng
    }
}

/// The randomness a sketch builder draws from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RandomSource {
    KWise(KWiseFamily),
    Independent(IndependentSource),
}

impl RandomSource {
    pub fn from_independence(independence: Independence, seed: u64) -> Result<Self> {
        match independence {
            Independence::KWise { degree_k } => {
                Ok(RandomSource::KWise(KWiseFamily::mersenne(seed, degree_k)?))
            }
            Independence::Full => Ok(RandomSource::Independent(IndependentSource::new(seed))),
        }
    }

    pub fn independence(&self) -> Independence {
        match self {
            RandomSource::KWise(f) => Independence::KWise {
                degree_k: f.degree_k(),
            },
            RandomSource::Independent(_) => Independence::Full,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RandomSource::KWise(f) => f.seed(),
            RandomSource::Independent(s) => s.seed(),
        }
    }
}

/// `8 * ceil(ln(max(d / (eps * delta), pm)))`, the independence degree
/// sufficient for the moment method at order `O(log(d / (eps delta)))`.
pub fn default_degree(d: usize, eps: f64, delta: f64, pm: f64) -> usize {
    let arg = (d as f64 / (eps * delta)).max(pm).max(std::f64::consts::E);
    8 * arg.ln().ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_polynomials(q: u64, k: usize) -> Vec<KWiseFamily> {
        let total = q.pow(k as u32);
        (0..total)
            .map(|mut code| {
                let coeffs = (0..k)
                    .map(|_| {
                        let c = code % q;
                        code /= q;
                        c
                    })
                    .collect();
                KWiseFamily::from_coefficients(coeffs, q).unwrap()
            })
            .collect()
    }

    #[test]
    fn primality() {
        let primes: Vec<u64> = (0..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
        assert!(is_prime(MERSENNE_61));
        assert!(!is_prime((1u64 << 61) + 1));
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2, 3, 5, 7
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(KWiseFamily::new(1, 0, 5), Err(Error::Parameter(_))));
        assert!(matches!(KWiseFamily::new(1, 2, 1), Err(Error::Parameter(_))));
        assert!(matches!(KWiseFamily::new(1, 2, 9), Err(Error::Parameter(_))));
        let f = KWiseFamily::new(1, 2, 5).unwrap();
        assert!(matches!(f.eval(5), Err(Error::Range { index: 5, modulus: 5 })));
        assert!(matches!(f.rademacher_at(7), Err(Error::Range { .. })));
        assert!(matches!(f.uniform_range_at(0, 3, 2), Err(Error::Parameter(_))));
        assert!(matches!(f.uniform_range_at(0, 0, 5), Err(Error::Parameter(_))));
    }

    #[test]
    fn constant_family_for_k1() {
        let f = KWiseFamily::new(0, 1, 5).unwrap();
        let v0 = f.eval(0).unwrap();
        for x in 1..5 {
            assert_eq!(f.eval(x).unwrap(), v0);
        }
    }

    #[test]
    fn affine_family_for_k2() {
        let f = KWiseFamily::new(7, 2, 5).unwrap();
        let b = f.eval(0).unwrap();
        let a = (f.eval(1).unwrap() + 5 - b) % 5;
        for x in 0..5 {
            assert_eq!(f.eval(x).unwrap(), (a * x + b) % 5);
        }
    }

    #[test]
    fn seeds_cover_all_affine_maps_and_pairs_are_uniform() {
        // Find one seed for each of the 25 affine maps over F_5.
        let mut seed_for = std::collections::BTreeMap::new();
        let mut seed = 0u64;
        while seed_for.len() < 25 {
            let f = KWiseFamily::new(seed, 2, 5).unwrap();
            seed_for.entry(f.coefficients().to_vec()).or_insert(seed);
            seed += 1;
        }
        let mut counts = [[0u32; 5]; 5];
        for &s in seed_for.values() {
            let f = KWiseFamily::new(s, 2, 5).unwrap();
            counts[f.eval(0).unwrap() as usize][f.eval(3).unwrap() as usize] += 1;
        }
        assert!(counts.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn sign_bias_on_f5() {
        for index in 0..5 {
            let plus = all_polynomials(5, 1)
                .iter()
                .filter(|f| f.rademacher_at(index).unwrap() == 1)
                .count();
            assert_eq!(plus, 3, "fraction of +1 must be 3/5");
        }
    }

    #[test]
    fn uniform_range_edge_cases() {
        let f = KWiseFamily::mersenne(11, 4).unwrap();
        for i in 0..100 {
            assert_eq!(f.uniform_range_at(i, 3, 3).unwrap(), 3);
        }
        // Full-width range is the identity map on field elements.
        for g in all_polynomials(5, 2) {
            for x in 0..5 {
                assert_eq!(g.uniform_range_at(x, 0, 4).unwrap() as u64, g.eval(x).unwrap());
            }
        }
        let g = KWiseFamily::new(3, 3, 7).unwrap();
        for x in 0..7 {
            let v = g.uniform_range_at(x, -2, 1).unwrap();
            assert!((-2..=1).contains(&v));
        }
    }

    #[test]
    fn pairs_of_positions_jointly_uniform_on_f5() {
        let fams = all_polynomials(5, 2);
        for x in 0..5u64 {
            for y in 0..5u64 {
                if x == y {
                    continue;
                }
                let mut counts = [[0u32; 5]; 5];
                for f in &fams {
                    let a = f.uniform_range_at(x, 0, 4).unwrap() as usize;
                    let b = f.uniform_range_at(y, 0, 4).unwrap() as usize;
                    counts[a][b] += 1;
                }
                assert!(counts.iter().flatten().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn batch_matches_scalar() {
        let f = KWiseFamily::mersenne(99, 17).unwrap();
        let xs: Vec<u64> = (0..23).map(|i| i * 1_000_003 + 5).collect();
        let mut out = Vec::new();
        f.eval_batch_unchecked(&xs, &mut out);
        for (x, h) in xs.iter().zip(&out) {
            assert_eq!(f.eval(*x).unwrap(), *h);
        }
        let g = KWiseFamily::new(4, 3, 7).unwrap();
        g.eval_batch_unchecked(&[0, 1, 2, 3, 4, 5], &mut out);
        assert_eq!(out, (0..6).map(|x| g.eval(x).unwrap()).collect::<Vec<_>>());
    }

    #[test]
    fn mersenne_arithmetic_matches_u128() {
        let vals = [0, 1, 2, MERSENNE_61 - 1, MERSENNE_61 / 2, 123_456_789_012_345];
        for &a in &vals {
            for &b in &vals {
                let expect = ((a as u128 * b as u128) % MERSENNE_61 as u128) as u64;
                assert_eq!(mul_mod_m61(a, b), expect);
                assert_eq!(add_mod_m61(a, b), ((a as u128 + b as u128) % MERSENNE_61 as u128) as u64);
            }
        }
    }

    #[test]
    fn default_degree_values() {
        // d / (eps delta) = 16 / 0.025 = 640, ln 640 = 6.46
        assert_eq!(default_degree(16, 0.5, 0.05, 8.0), 56);
        // pm dominates
        assert_eq!(default_degree(1, 0.5, 0.5, 1.0e4), 8 * 10);
    }

    #[test]
    fn independent_columns_are_reproducible() {
        use rand::RngCore;
        let s = IndependentSource::new(5);
        let a: Vec<u64> = (0..4).map(|_| 0).scan(s.column_rng(3), |r, _: u64| Some(r.next_u64())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(s.column_rng(3), |r, _: u64| Some(r.next_u64())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(s.column_rng(4), |r, _: u64| Some(r.next_u64())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
