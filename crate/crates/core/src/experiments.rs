//! Calibration, parameter sweeps and JSON-configured verification runs.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibration;
use crate::diagnostics::{
    decoupled_gamma_moment, embedding_trial, embedding_trial_until, trace_moment, MomentProbe,
    ScoreChoice, SketchModel, SubspaceSampler, TrialSummary,
};
use crate::error::{Error, Result};
use crate::kwise::{default_degree, derive_seed, Independence};
use crate::less::less_default_parameters_with;
use crate::leverage::LeverageScores;
use crate::oblivious::{default_parameters_with, SketchSpec};
use crate::sketch::SketchKind;

/// Haar and coordinate-subspace trial runs for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub haar: TrialSummary,
    /// Skipped when the Haar run already failed.
    pub coordinate: Option<TrialSummary>,
    pub pass: bool,
}

/// Runs `trials` Haar and coordinate trials, stopping a run as soon as its
/// failures exceed `floor(delta * trials)`.
pub fn evaluate(
    model: &SketchModel,
    n: usize,
    d: usize,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Evaluation> {
    let budget = (delta * trials as f64).floor() as usize;
    let run = |sampler: SubspaceSampler, salt: u64| {
        embedding_trial_until(model, &sampler, n, d, trials, eps, derive_seed(seed, salt), Some(budget))
    };
    let haar = run(SubspaceSampler::Haar, 0)?;
    if haar.failures > budget {
        return Ok(Evaluation {
            haar,
            coordinate: None,
            pass: false,
        });
    }
    let coordinate = run(SubspaceSampler::Coordinate, 1)?;
    let pass = coordinate.failures <= budget;
    Ok(Evaluation {
        haar,
        coordinate: Some(coordinate),
        pass,
    })
}

/// The fixed problem the constants are calibrated on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub d: usize,
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
}

pub const CALIBRATION_SETUP: CalibrationSetup = CalibrationSetup {
    d: 16,
    n: 4096,
    eps: 0.5,
    delta: 0.05,
    trials: 200,
    seed: 0x5eed_ca1b,
};

/// Exponent range searched for each constant.
const C_M_EXPONENTS: std::ops::RangeInclusive<i32> = -2..=6;
const C_SPARSITY_EXPONENTS: std::ops::RangeInclusive<i32> = -8..=4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub constant: String,
    pub value: f64,
    pub c_m: f64,
    pub m: usize,
    pub pm: f64,
    pub failure_haar: f64,
    pub failure_coordinate: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub setup: CalibrationSetup,
    pub calibration: Calibration,
    pub steps: Vec<CalibrationStep>,
}

fn step(constant: &str, value: f64, c_m: f64, model: &SketchModel, pm: f64, eval: &Evaluation) -> CalibrationStep {
    CalibrationStep {
        constant: constant.to_string(),
        value,
        c_m,
        m: model.m(),
        pm,
        failure_haar: eval.haar.failure_fraction,
        failure_coordinate: eval.coordinate.map(|c| c.failure_fraction),
        pass: eval.pass,
    }
}

/// Smallest power-of-two constants for which the default sketches pass
/// [`evaluate`] on the setup.
///
/// `C_m` is the smallest value at which OSNAP, OSE-IE and LESS-IC (exact
/// scores) can all be made to pass with `p < 1`. At that `C_m`, `C_s`, `C_e`
/// and `C_L` are each the smallest passing value, searched in that order.
pub fn calibrate(setup: &CalibrationSetup) -> Result<CalibrationRun> {
    let mut steps = Vec::new();
    for em in C_M_EXPONENTS {
        let c_m = 2f64.powi(em);
        if let Some(cal) = calibrate_at(setup, c_m, &mut steps)? {
            return Ok(CalibrationRun {
                setup: *setup,
                calibration: cal,
                steps,
            });
        }
    }
    Err(Error::Structural("no C_m in the search grid admits passing sparse sketches".into()))
}

fn calibrate_at(setup: &CalibrationSetup, c_m: f64, steps: &mut Vec<CalibrationStep>) -> Result<Option<Calibration>> {
    let CalibrationSetup {
        d,
        n,
        eps,
        delta,
        trials,
        seed,
    } = *setup;
    let mut cal = Calibration {
        c_m,
        c_s: 0.0,
        c_e: 0.0,
        c_l: 0.0,
    };
    let mut search = |name: &str, build: &dyn Fn(f64) -> Result<Option<(SketchModel, f64)>>| -> Result<Option<f64>> {
        for e in C_SPARSITY_EXPONENTS {
            let value = 2f64.powi(e);
            let Some((model, pm)) = build(value)? else { break };
            let eval = evaluate(&model, n, d, eps, delta, trials, seed)?;
            steps.push(step(name, value, c_m, &model, pm, &eval));
            log::info!("calibrate: c_m = {c_m}, {name} = {value} -> {}", eval.pass);
            if eval.pass {
                return Ok(Some(value));
            }
        }
        Ok(None)
    };

    let oblivious = |kind: SketchKind, cal: Calibration| -> Result<Option<(SketchModel, f64)>> {
        let spec = default_parameters_with(&cal, d, n, eps, delta, kind)?;
        Ok((spec.p < 1.0).then(|| (SketchModel::oblivious(spec), spec.pm())))
    };
    let Some(c_s) = search("c_s", &|c_s| oblivious(SketchKind::Osnap, Calibration { c_s, ..cal }))? else {
        return Ok(None);
    };
    cal.c_s = c_s;
    let Some(c_e) = search("c_e", &|c_e| oblivious(SketchKind::OseIe, Calibration { c_e, ..cal }))? else {
        return Ok(None);
    };
    cal.c_e = c_e;
    let Some(c_l) = search("c_l", &|c_l| {
        let less = less_default_parameters_with(&Calibration { c_l, ..cal }, d, eps, delta, LeverageScores::uniform(n, d)?)?;
        if less.p >= 1.0 {
            return Ok(None);
        }
        let model = SketchModel::LessIc {
            m: less.m,
            p: less.p,
            scores: ScoreChoice::Exact,
            independence: less.independence,
        };
        Ok(Some((model, less.pm())))
    })?
    else {
        return Ok(None);
    };
    cal.c_l = c_l;
    Ok(Some(cal))
}

/// One point of a sparsity or dimension sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: SketchKind,
    pub eps: f64,
    pub m: usize,
    pub pm: f64,
    pub trials: usize,
    pub failure_haar: f64,
    pub failure_coordinate: Option<f64>,
    pub p95_haar: f64,
    pub pass: bool,
}

/// OSNAP (with `m` rounded up to a multiple of `s`) or OSE-IE with `s`
/// expected nonzeros per column.
pub fn sparse_model(kind: SketchKind, m_base: usize, n: usize, s: usize, degree_k: usize, seed: u64) -> Result<SketchModel> {
    let spec = match kind {
        SketchKind::Osnap => SketchSpec::osnap(
            m_base.div_ceil(s) * s,
            n,
            s,
            Independence::KWise { degree_k },
            seed,
        )?,
        SketchKind::OseIe => SketchSpec::new(kind, m_base, n, s as f64 / m_base as f64, Independence::Full, seed)?,
        other => return Err(Error::param(format!("sparsity sweeps support osnap and ose-ie, not {other}"))),
    };
    Ok(SketchModel::oblivious(spec))
}

fn row(kind: SketchKind, eps: f64, model: &SketchModel, eval: &Evaluation) -> SweepRow {
    let (m, pm) = match model {
        SketchModel::Oblivious { spec } => (spec.m, spec.pm()),
        _ => unreachable!("sweeps use oblivious models"),
    };
    SweepRow {
        kind,
        eps,
        m,
        pm,
        trials: eval.haar.trials,
        failure_haar: eval.haar.failure_fraction,
        failure_coordinate: eval.coordinate.map(|c| c.failure_fraction),
        p95_haar: eval.haar.distortion.p95,
        pass: eval.pass,
    }
}

/// Smallest `s` for which the sketch passes [`evaluate`] and keeps passing
/// at `2s`; `None` if no such `s <= m` is found.
///
/// Passing is not monotone near `s = 1`: a single shared row between two
/// columns contributes `1/s` to their inner product, so `1 < s < 1/eps`
/// fails on coordinate subspaces even when `s = 1` (which fails only on an
/// outright collision) happens to pass. The doubling phase therefore looks
/// for two consecutive passing powers of two before bisecting.
#[allow(clippy::too_many_arguments)]
pub fn minimal_sparsity(
    kind: SketchKind,
    m_base: usize,
    n: usize,
    d: usize,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Option<SweepRow>> {
    let try_s = |s: usize| -> Result<SweepRow> {
        let degree_k = default_degree(d, eps, delta, s as f64);
        let model = sparse_model(kind, m_base, n, s, degree_k, 0)?;
        let eval = evaluate(&model, n, d, eps, delta, trials, seed)?;
        log::info!("sweep {kind} eps = {eps}: s = {s} -> {}", eval.pass);
        Ok(row(kind, eps, &model, &eval))
    };
    let mut lo = 0;
    let mut s = 1;
    let mut pending: Option<(usize, SweepRow)> = None;
    let (mut hi, mut best) = loop {
        let r = try_s(s)?;
        match (r.pass, pending.take()) {
            (true, Some(first)) => break first,
            (true, None) if s >= m_base => break (s, r),
            (true, None) => pending = Some((s, r)),
            (false, _) => lo = s,
        }
        if s >= m_base {
            return Ok(None);
        }
        s = (2 * s).min(m_base);
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let r = try_s(mid)?;
        if r.pass {
            hi = mid;
            best = r;
        } else {
            lo = mid;
        }
    }
    Ok(Some(best))
}

/// Minimal sparsity at each `eps` with `m = ceil(c_m d / eps^2)`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_eps(
    kind: SketchKind,
    d: usize,
    n: usize,
    delta: f64,
    eps_values: &[f64],
    c_m: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &eps in eps_values {
        let m_base = (c_m * d as f64 / (eps * eps)).ceil() as usize;
        match minimal_sparsity(kind, m_base, n, d, eps, delta, trials, seed)? {
            Some(r) => rows.push(r),
            None => log::warn!("no sparsity passes at eps = {eps} with m = {m_base}"),
        }
    }
    Ok(rows)
}

/// Full (not early-stopped) trial runs at a grid of `(m, s)` points; a row
/// passes when both failure fractions are at most `delta`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_grid(
    kind: SketchKind,
    d: usize,
    n: usize,
    eps: f64,
    delta: f64,
    points: &[(usize, usize)],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    points
        .iter()
        .map(|&(m, s)| {
            let degree_k = default_degree(d, eps, delta, s as f64);
            let model = sparse_model(kind, m, n, s, degree_k, 0)?;
            let haar = embedding_trial(&model, &SubspaceSampler::Haar, n, d, trials, eps, derive_seed(seed, 0))?;
            let coord = embedding_trial(&model, &SubspaceSampler::Coordinate, n, d, trials, eps, derive_seed(seed, 1))?;
            let eval = Evaluation {
                pass: haar.failure_fraction <= delta && coord.failure_fraction <= delta,
                haar,
                coordinate: Some(coord),
            };
            Ok(row(kind, eps, &model, &eval))
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn write_csv<W: Write, T: Serialize>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub const SCHEMA_VERSION: u32 = 1;

/// A `verify` run: a list of experiments sharing a master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub experiments: Vec<Experiment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Experiment {
    Embedding {
        #[serde(default)]
        name: Option<String>,
        model: SketchModel,
        subspace: SubspaceSampler,
        n: usize,
        d: usize,
        trials: usize,
        eps: f64,
        /// Passes when the failure fraction is at most this.
        #[serde(default)]
        max_failure_fraction: Option<f64>,
    },
    TraceMoment {
        #[serde(default)]
        name: Option<String>,
        model: SketchModel,
        subspace: SubspaceSampler,
        n: usize,
        d: usize,
        q: usize,
        trials: usize,
        /// Passes when `estimate^{1/2q}` is at most this.
        #[serde(default)]
        max_root: Option<f64>,
    },
    DecoupledMoment {
        #[serde(default)]
        name: Option<String>,
        model: SketchModel,
        subspace: SubspaceSampler,
        n: usize,
        d: usize,
        q: usize,
        trials: usize,
        /// Passes when the estimate is within `max_z` standard errors of
        /// `expected`.
        #[serde(default)]
        expected: Option<f64>,
        #[serde(default)]
        max_z: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum ExperimentResult {
    Embedding {
        name: Option<String>,
        summary: TrialSummary,
        pass: bool,
    },
    Moment {
        name: Option<String>,
        probe: MomentProbe,
        pass: bool,
    },
}

impl ExperimentResult {
    pub fn pass(&self) -> bool {
        match self {
            ExperimentResult::Embedding { pass, .. } | ExperimentResult::Moment { pass, .. } => *pass,
        }
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            ExperimentResult::Embedding { name, .. } | ExperimentResult::Moment { name, .. } => name.as_deref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub config: VerifyConfig,
    pub results: Vec<ExperimentResult>,
    pub pass: bool,
}

impl VerifyConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }
}

fn fixed_basis(subspace: &SubspaceSampler, n: usize, d: usize, seed: u64) -> Result<nalgebra::DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    subspace.sample(n, d, &mut rng)
}

pub fn run_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    let mut results = Vec::with_capacity(config.experiments.len());
    for (i, exp) in config.experiments.iter().enumerate() {
        let seed = derive_seed(config.seed, i as u64);
        let result = match exp {
            Experiment::Embedding {
                name,
                model,
                subspace,
                n,
                d,
                trials,
                eps,
                max_failure_fraction,
            } => {
                let summary = embedding_trial(model, subspace, *n, *d, *trials, *eps, seed)?;
                let pass = max_failure_fraction.is_none_or(|f| summary.failure_fraction <= f);
                ExperimentResult::Embedding {
                    name: name.clone(),
                    summary,
                    pass,
                }
            }
            Experiment::TraceMoment {
                name,
                model,
                subspace,
                n,
                d,
                q,
                trials,
                max_root,
            } => {
                let u = fixed_basis(subspace, *n, *d, seed)?;
                let probe = trace_moment(model, &u, *q, *trials, derive_seed(seed, 1))?;
                let pass = max_root.is_none_or(|r| probe.estimate.powf(1.0 / (2 * q) as f64) <= r);
                ExperimentResult::Moment {
                    name: name.clone(),
                    probe,
                    pass,
                }
            }
            Experiment::DecoupledMoment {
                name,
                model,
                subspace,
                n,
                d,
                q,
                trials,
                expected,
                max_z,
            } => {
                let u = fixed_basis(subspace, *n, *d, seed)?;
                let probe = decoupled_gamma_moment(model, &u, *q, *trials, derive_seed(seed, 1))?;
                let pass = match expected {
                    Some(e) => probe.z_score(*e) <= max_z.unwrap_or(3.0),
                    None => true,
                };
                ExperimentResult::Moment {
                    name: name.clone(),
                    probe,
                    pass,
                }
            }
        };
        results.push(result);
    }
    let pass = results.iter().all(ExperimentResult::pass);
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        results,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn verify_config_round_trip() {
        let json = r#"{
            "schema_version": 1,
            "seed": 7,
            "experiments": [
                {"type": "embedding",
                 "model": {"model": "oblivious", "spec": {"kind": "osnap", "m": 64, "n": 256, "p": 0.125,
                           "independence": {"mode": "k-wise", "degree_k": 8}, "seed": 0}},
                 "subspace": {"kind": "haar"}, "n": 256, "d": 4, "trials": 10, "eps": 0.9,
                 "max_failure_fraction": 0.5},
                {"type": "decoupled-moment",
                 "model": {"model": "less-ic", "m": 64, "p": 0.25, "scores": "uniform",
                           "independence": {"mode": "full"}},
                 "subspace": {"kind": "coordinate"}, "n": 256, "d": 4, "q": 1, "trials": 50}
            ]
        }"#;
        let config = VerifyConfig::from_json(json).unwrap();
        let report = run_verify(&config).unwrap();
        assert_eq!(report.results.len(), 2);
        assert!(report.pass);
        let again = run_verify(&config).unwrap();
        assert_eq!(report, again);
        let bad = json.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(VerifyConfig::from_json(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = SweepRow {
            kind: SketchKind::Osnap,
            eps: 0.5,
            m: 64,
            pm: 4.0,
            trials: 10,
            failure_haar: 0.0,
            failure_coordinate: Some(0.1),
            p95_haar: 0.3,
            pass: true,
        };
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,eps,m,pm,trials,failure_haar,failure_coordinate,p95_haar,pass\n"));
        assert!(text.contains("osnap,0.5,64,4.0,10,0.0,0.1,0.3,true"));
    }
}
