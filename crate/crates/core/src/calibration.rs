//! Absolute constants for the default parameter formulas.
//!
//! The asymptotic parameter bounds only fix the shape of `m` and `pm`; the
//! multiplicative constants below come from the calibration experiment in
//! [`crate::experiments::calibrate`] (run it with `sparse-ose bench
//! --calibrate`). Each constant is the smallest power of two for which the
//! default sketches at `d = 16, n = 4096, eps = 0.5, delta = 0.05` fail the
//! `eps` band in at most a `delta` fraction of 200 trials, on Haar-random and
//! on coordinate subspaces. `C_L` passes at the bottom of the searched
//! range, so it is an upper bound rather than a measured threshold.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Embedding dimension: `m = C_m (d + ln(1/delta)) / eps^2`.
    pub c_m: f64,
    /// OSNAP sparsity: `s = C_s (L^2 / eps + L^3)`, `L = ln(d / (eps delta))`.
    pub c_s: f64,
    /// Extra OSE-IE sparsity: `s >= C_e L / eps^2`.
    pub c_e: f64,
    /// LESS-IC sparsity: `pm = C_L max(L^2.5 / eps, L^3)`.
    pub c_l: f64,
}

pub const CALIBRATED: Calibration = Calibration {
    c_m: 2.0,
    c_s: 1.0 / 128.0,
    c_e: 1.0 / 2.0,
    c_l: 1.0 / 256.0,
};

impl Default for Calibration {
    fn default() -> Self {
        CALIBRATED
    }
}
