//! `sparse-ose`: build, apply and check sparse subspace embeddings.
//!
//! Exit codes: 0 success, 2 parameter error, 3 IO or parse error,
//! 4 verification failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparse_ose::apply::apply;
use sparse_ose::calibration::CALIBRATED;
use sparse_ose::experiments::{
    calibrate, run_verify, sweep_eps, sweep_grid, write_csv, VerifyConfig, CALIBRATION_SETUP,
};
use sparse_ose::kwise::{default_degree, Independence, RandomSource};
use sparse_ose::less::{build_less_ic, build_less_ie, less_default_parameters, LessIcSpec};
use sparse_ose::leverage::{approx_leverage, exact_leverage, LeverageScores};
use sparse_ose::mtx::{load_matrix_market, write_matrix_market};
use sparse_ose::oblivious::{default_parameters, SketchSpec};
use sparse_ose::pipeline::{fast_subspace_embed, Overrides, PipelineConfig};
use sparse_ose::sketch::{DenseSketch, Sketch, SketchKind, SparseSketch};
use sparse_ose::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-ose", version, about = "Sparse oblivious and leverage-adapted subspace embeddings")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the bit-exact reference behaviour.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sketch and write it in the binary sketch format.
    Sketch(SketchArgs),
    /// Apply a sketch file to a Matrix Market matrix.
    Apply {
        sketch: PathBuf,
        matrix: PathBuf,
    },
    /// Exact or approximate leverage scores of a Matrix Market matrix, as JSON.
    Leverage(LeverageArgs),
    /// Run the experiments of a JSON config and write a JSON report.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sparsity and dimension sweeps (CSV) or the constant calibration (JSON).
    Bench(BenchArgs),
    /// Fast subspace embedding of a Matrix Market matrix.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SketchArgs {
    #[arg(long)]
    kind: SketchKind,
    /// Columns of the sketch (rows of the input). Taken from the scores for
    /// LESS kinds.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Entry density; `p m` nonzeros per column in expectation.
    #[arg(long, conflicts_with = "s")]
    p: Option<f64>,
    /// Nonzeros per column (`p = s / m`).
    #[arg(long)]
    s: Option<usize>,
    /// Subspace dimension used for default parameters.
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Polynomial degree of the K-wise family.
    #[arg(long)]
    degree_k: Option<usize>,
    #[arg(long, value_enum)]
    independence: Option<IndependenceArg>,
    /// Leverage scores (JSON) for LESS kinds.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndependenceArg {
    Kwise,
    Full,
}

#[derive(Args)]
struct LeverageArgs {
    matrix: PathBuf,
    #[arg(long, conflicts_with = "gamma", required_unless_present = "gamma")]
    exact: bool,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SweepAxis {
    Eps,
    M,
    S,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, conflicts_with = "calibrate", required_unless_present = "calibrate")]
    sweep: Option<SweepAxis>,
    #[arg(long)]
    calibrate: bool,
    #[arg(long, default_value = "osnap")]
    kind: SketchKind,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// `eps` values of an eps sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.125")]
    eps_values: Vec<f64>,
    /// `m = c_m d / eps^2` in an eps sweep.
    #[arg(long, default_value_t = CALIBRATED.c_m)]
    c_m: f64,
    /// Values of the swept `m` (m sweep) or fixed `m` (s sweep).
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    /// Values of the swept `s` (s sweep) or fixed `s` (m sweep).
    #[arg(long, value_delimiter = ',')]
    s: Vec<usize>,
}

#[derive(Args)]
struct PipelineArgs {
    matrix: PathBuf,
    #[arg(long, default_value = "less-ic")]
    kind: SketchKind,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    pm: Option<f64>,
    #[arg(long)]
    degree_k: Option<usize>,
    /// Check the distortion against an exact orthonormal basis.
    #[arg(long)]
    validate: bool,
    /// Where to write the JSON run report (stderr when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Outcome {
    Done,
    VerificationFailed(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.common.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 3 } else { 2 })
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let common = &cli.common;
    match &cli.command {
        Command::Sketch(args) => {
            let sketch = build_sketch(args, common.seed.unwrap_or(0))?;
            let path = common
                .out
                .as_ref()
                .ok_or_else(|| Error::Parameter("sketch needs --out".into()))?;
            sketch.save(path)?;
            Ok(Outcome::Done)
        }
        Command::Apply { sketch, matrix } => {
            let sketch = SparseSketch::load(sketch)?;
            let a = load_matrix_market(matrix)?;
            let result = apply(&sketch, &a)?;
            with_output(common.out.as_deref(), |w| write_matrix_market(&result, w))?;
            Ok(Outcome::Done)
        }
        Command::Leverage(args) => {
            let a = load_matrix_market(&args.matrix)?;
            let scores = match args.gamma {
                Some(gamma) => approx_leverage(&a, gamma, common.seed.unwrap_or(0))?,
                None => exact_leverage(&a)?,
            };
            let json = scores.to_json()?;
            with_output(common.out.as_deref(), |w| Ok(writeln!(w, "{json}")?))?;
            Ok(Outcome::Done)
        }
        Command::Verify { config } => {
            let mut config = VerifyConfig::from_json(&std::fs::read_to_string(config)?)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            let report = run_verify(&config)?;
            with_output(common.out.as_deref(), |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                Ok(writeln!(w)?)
            })?;
            if report.pass {
                Ok(Outcome::Done)
            } else {
                let failed: Vec<String> = report
                    .results
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| !r.pass())
                    .map(|(i, r)| r.name().map_or_else(|| format!("experiment {i}"), str::to_string))
                    .collect();
                Ok(Outcome::VerificationFailed(failed.join(", ")))
            }
        }
        Command::Bench(args) => bench(args, common),
        Command::Pipeline(args) => pipeline(args, common),
    }
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn build_sketch(args: &SketchArgs, seed: u64) -> Result<SparseSketch> {
    let independence = |default: Independence, pm: f64| -> Independence {
        match (args.independence, args.degree_k) {
            (Some(IndependenceArg::Full), _) => Independence::Full,
            (_, Some(k)) => Independence::KWise { degree_k: k },
            (Some(IndependenceArg::Kwise), None) => Independence::KWise {
                degree_k: default_degree(args.d, args.eps, args.delta, pm),
            },
            (None, None) => default,
        }
    };
    let density = |m: usize, default_p: f64| -> f64 {
        match (args.p, args.s) {
            (Some(p), _) => p,
            (None, Some(s)) => s as f64 / m as f64,
            (None, None) => default_p,
        }
    };

    if matches!(args.kind, SketchKind::LessIc | SketchKind::LessIe) {
        let path = args
            .scores
            .as_ref()
            .ok_or_else(|| Error::Parameter(format!("{} needs --scores", args.kind)))?;
        let scores = LeverageScores::from_json(&std::fs::read_to_string(path)?)?;
        if args.n.is_some_and(|n| n != scores.len()) {
            return Err(Error::Dimension(format!("--n differs from the {} scores", scores.len())));
        }
        let base = less_default_parameters(scores.d, args.eps, args.delta, scores.clone())?;
        let m = args.m.unwrap_or(base.m);
        let p = density(m, if args.m.is_some() { (base.pm() / m as f64).min(1.0) } else { base.p });
        let default_ind = match args.kind {
            SketchKind::LessIc => Independence::KWise {
                degree_k: default_degree(scores.d, args.eps, args.delta, p * m as f64),
            },
            _ => Independence::Full,
        };
        let ind = independence(default_ind, p * m as f64);
        if args.kind == SketchKind::LessIc {
            let spec = LessIcSpec::new(m, p, scores, ind, seed)?;
            return build_less_ic(&spec, &spec.source()?);
        }
        return build_less_ie(&scores, p, m, &RandomSource::from_independence(ind, seed)?);
    }

    let n = args.n.ok_or_else(|| Error::Parameter("--n is required".into()))?;
    let base = default_parameters(args.d, n, args.eps, args.delta, args.kind)?;
    let m = args.m.unwrap_or(base.m);
    let p = if args.kind.is_dense() { 1.0 } else { density(m, (base.pm() / m as f64).min(1.0)) };
    let default_ind = match base.independence {
        Independence::KWise { .. } => Independence::KWise {
            degree_k: default_degree(args.d, args.eps, args.delta, p * m as f64),
        },
        Independence::Full => Independence::Full,
    };
    let ind = independence(default_ind, p * m as f64);
    let spec = SketchSpec::new(args.kind, m, n, p, ind, seed)?;
    match spec.build()? {
        Sketch::Sparse(s) => Ok(s),
        Sketch::Dense(d) => dense_to_sparse(&d),
    }
}

fn dense_to_sparse(dense: &DenseSketch) -> Result<SparseSketch> {
    let columns = dense
        .matrix
        .column_iter()
        .map(|c| c.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect())
        .collect();
    SparseSketch::from_columns(dense.header.clone(), columns)
}

fn bench(args: &BenchArgs, common: &Common) -> Result<Outcome> {
    if args.calibrate {
        let mut setup = CALIBRATION_SETUP;
        if let Some(seed) = common.seed {
            setup.seed = seed;
        }
        let run = calibrate(&setup)?;
        with_output(common.out.as_deref(), |w| {
            serde_json::to_writer_pretty(&mut *w, &run)?;
            Ok(writeln!(w)?)
        })?;
        if run.calibration != CALIBRATED {
            return Ok(Outcome::VerificationFailed(format!(
                "measured {:?} differs from the stored {:?}",
                run.calibration, CALIBRATED
            )));
        }
        return Ok(Outcome::Done);
    }
    let seed = common.seed.unwrap_or(CALIBRATION_SETUP.seed);
    let rows = match args.sweep {
        Some(SweepAxis::Eps) => sweep_eps(args.kind, args.d, args.n, args.delta, &args.eps_values, args.c_m, args.trials, seed)?,
        Some(axis) => {
            let (swept, fixed, name) = match axis {
                SweepAxis::M => (&args.m, &args.s, "--s"),
                _ => (&args.s, &args.m, "--m"),
            };
            if swept.is_empty() || fixed.len() != 1 {
                return Err(Error::Parameter(format!(
                    "a sweep needs a list of swept values and exactly one {name}"
                )));
            }
            let points: Vec<(usize, usize)> = swept
                .iter()
                .map(|&v| if axis == SweepAxis::M { (v, fixed[0]) } else { (fixed[0], v) })
                .collect();
            sweep_grid(args.kind, args.d, args.n, args.eps, args.delta, &points, args.trials, seed)?
        }
        None => unreachable!("clap requires --sweep or --calibrate"),
    };
    with_output(common.out.as_deref(), |w| write_csv(&rows, w))?;
    Ok(Outcome::Done)
}

fn pipeline(args: &PipelineArgs, common: &Common) -> Result<Outcome> {
    let a = load_matrix_market(&args.matrix)?;
    let mut config = PipelineConfig::new(args.eps, args.delta, args.gamma, common.seed.unwrap_or(0), args.kind);
    config.overrides = Overrides {
        m: args.m,
        pm: args.pm,
        degree_k: args.degree_k,
    };
    config.validate = args.validate;
    let (embedded, report) = fast_subspace_embed(&a, &config)?;
    with_output(common.out.as_deref(), |w| write_matrix_market(&embedded, w))?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.report {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => eprintln!("{json}"),
    }
    match report.validation {
        Some(v) if !v.pass => Ok(Outcome::VerificationFailed(format!(
            "singular values [{:.4}, {:.4}] leave the eps = {} band",
            v.s_min, v.s_max, args.eps
        ))),
        _ => Ok(Outcome::Done),
    }
}
