use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distortion, run_trials, DistortionReport, SketchModel, SubspaceSampler};
use crate::error::{Error, Result};
use crate::kwise::derive_seed;

/// Trials per batch when stopping early.
const BATCH: usize = 32;

/// Nearest-rank quantiles of `max(s_max - 1, 1 - s_min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
}

impl Quantiles {
    fn from_samples(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let rank = ((q * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
            xs[rank - 1]
        };
        Self {
            p50: at(0.5),
            p90: at(0.9),
            p95: at(0.95),
            max: at(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    /// Trials actually run.
    pub trials: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub eps: f64,
    pub distortion: Quantiles,
    pub min_s_min: f64,
    pub max_s_max: f64,
    /// True when the failure budget was exceeded before all trials ran.
    pub stopped_early: bool,
}

fn one_trial(
    model: &SketchModel,
    sampler: &SubspaceSampler,
    n: usize,
    d: usize,
    eps: f64,
    trial_seed: u64,
) -> Result<DistortionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 0));
    let u = sampler.sample(n, d, &mut rng)?;
    let sketch = model.realize(&u, derive_seed(trial_seed, 1))?;
    distortion(&sketch, &u, eps)
}

/// Draws a fresh subspace and sketch per trial and reports how often the
/// singular values of `Pi U` leave `[1 - eps, 1 + eps]`.
pub fn embedding_trial(
    model: &SketchModel,
    sampler: &SubspaceSampler,
    n: usize,
    d: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<TrialSummary> {
    embedding_trial_until(model, sampler, n, d, trials, eps, seed, None)
}

/// As [`embedding_trial`], but stops after the first batch of 32 trials in
/// which the failure count exceeds `max_failures`. Trial `i` is the same
/// draw whether or not the run stops early.
#[allow(clippy::too_many_arguments)]
pub fn embedding_trial_until(
    model: &SketchModel,
    sampler: &SubspaceSampler,
    n: usize,
    d: usize,
    trials: usize,
    eps: f64,
    seed: u64,
    max_failures: Option<usize>,
) -> Result<TrialSummary> {
    if trials == 0 {
        return Err(Error::param("at least one trial is required"));
    }
    let batch = if max_failures.is_some() { BATCH } else { trials };
    let mut reports: Vec<DistortionReport> = Vec::with_capacity(trials);
    let mut failures = 0;
    let mut stopped_early = false;
    let mut start = 0;
    while start < trials {
        let end = (start + batch).min(trials);
        let chunk = run_trials(start..end, seed, |_, ts| one_trial(model, sampler, n, d, eps, ts))?;
        failures += chunk.iter().filter(|r| !r.pass).count();
        reports.extend(chunk);
        start = end;
        if max_failures.is_some_and(|limit| failures > limit) && start < trials {
            stopped_early = true;
            break;
        }
    }
    let run = reports.len();
    Ok(TrialSummary {
        trials: run,
        failures,
        failure_fraction: failures as f64 / run as f64,
        eps,
        distortion: Quantiles::from_samples(reports.iter().map(|r| r.distortion()).collect()),
        min_s_min: reports.iter().map(|r| r.s_min).fold(f64::INFINITY, f64::min),
        max_s_max: reports.iter().map(|r| r.s_max).fold(0.0, f64::max),
        stopped_early,
    })
}
