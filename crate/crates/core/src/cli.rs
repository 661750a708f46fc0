//! Command-line front end: argument parsing, file I/O, subcommand dispatch and
//! report emission.
//!
//! Every subcommand is single-threaded except `verify-all`, whose trials run
//! on the rayon pool and are collected in a fixed order. JSON is pretty-printed
//! with a trailing newline; CSV floats carry 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classify::{
    as_signs, compare_svm_lr, kernel_svm_routes, lambda_threshold, loss_sandwich, map_predict,
    svm_closed_form, svm_loss, svm_solve_generic, LrBudget, SolverConfig,
};
use crate::dist::{parse_json, read_samples_csv};
use crate::feature::{whiten, Feature};
use crate::fisher::TiltExperiment;
use crate::hscore::{h_score, h_score_kernel, h_score_max, moment_spectrum};
use crate::kernel::{
    feature_map, kdm, maximal_correlation_kernel, projection_kernel_pinv, Kernel, KernelFile,
    FEATURE_MAP_TOL,
};
use crate::modal::{decompose, DecompositionFile, SIGMA_TOL};
use crate::rng::{random_balanced_binary, random_feature, SplitMix64};
use crate::verify::{run_all, Summary, VerifyConfig};
use crate::{Error, JointDistribution};

/// Environment variable holding the log filter (`error`, `info`, `debug`, ...).
pub const LOG_ENV: &str = "CORRKERNEL_LOG";

/// Exit status for validation failures.
pub const EXIT_INVALID: u8 = 1;
/// Exit status when a property suite fails.
pub const EXIT_SUITE_FAILED: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Modal decomposition of a joint distribution.
    Decompose,
    /// H-score of a feature or kernel.
    Hscore,
    /// Projection kernel of a feature (or the maximal correlation kernel) and its KDM.
    Kernel,
    /// Linear SVM on a feature or kernel feature map.
    Svm,
    /// SVM/LR gap, loss sandwich and kernel SVM route reports on seeded instances.
    Compare,
    /// Mixture experiment on an exponential-tilt family.
    Fisher,
    /// Every seeded invariant suite.
    VerifyAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    /// Closed form, valid for `λ ≥ λ_T`.
    Closed,
    /// Subgradient solver with smoothed Newton refinement.
    Generic,
}

/// Parsed command line.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "corrkernel",
    version,
    about = "Maximal correlation kernels on finite alphabets",
    allow_negative_numbers = true
)]
pub struct RunConfig {
    pub command: Command,
    /// Input files, in the order the subcommand expects (repeat the flag).
    #[arg(long = "in", value_name = "PATH")]
    pub inputs: Vec<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Regularization weight; defaults to `λ_T` (or 1 when `λ_T = 0`).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated mixture or BSC parameters.
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Subgradient iterations of the generic SVM solver.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Spectral cutoff: singular values for `decompose`, eigenvalues for feature maps.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum, default_value_t = Solver::Closed)]
    pub solver: Solver,
    /// Restrict `verify-all` to the named suites (repeat the flag).
    #[arg(long = "suite")]
    pub suites: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

/// Machine-readable error written to standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub field: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn report(&self) -> ErrorReport {
        let (kind, field) = match self {
            CliError::Lib(e) => (e.kind().to_string(), e.field().map(str::to_string)),
            CliError::Io { path, .. } => ("io".to_string(), Some(path.clone())),
            CliError::Usage(_) => ("usage".to_string(), None),
        };
        ErrorReport {
            kind,
            field,
            message: self.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Rendered output of a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    /// `false` only when a property suite failed.
    pub passed: bool,
}

/// `decompose` output: the modal decomposition layout.
pub type DecomposeOutput = DecompositionFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HscoreOutput {
    pub h_score: f64,
    /// `½ Σ σᵢ²`, the largest attainable H-score.
    pub h_max: f64,
    /// Eigenvalues of `Λ` above the cutoff, descending.
    pub spectrum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelOutput {
    #[serde(flatten)]
    pub kernel: KernelFile,
    pub y_alphabet: Vec<String>,
    /// `|X| × |Y|` table of the kernelized discriminative model.
    pub kdm: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub x: String,
    pub decision: f64,
    pub sign: i8,
    /// The `Y` label carrying that sign.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmOutput {
    pub solver: String,
    pub lambda: f64,
    pub lambda_t: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub loss: f64,
    /// Certified bound on the loss error; generic solver only.
    pub duality_gap: Option<f64>,
    pub converged: Option<bool>,
    pub predictions: Vec<Prediction>,
}

/// One long-format record of the `compare` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub suite: String,
    pub trial: usize,
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherRow {
    pub eps: f64,
    pub e1: f64,
    pub e2: Option<f64>,
    pub e3: f64,
    /// Ratios to the previous row; absent on the first row or when undefined.
    pub ratio_e1: Option<f64>,
    pub ratio_e2: Option<f64>,
    pub ratio_e3: Option<f64>,
    pub kdm_error: f64,
    pub mutual_information: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherOutput {
    pub rows: Vec<FisherRow>,
    pub passes: bool,
}

const DEFAULT_EPS: [f64; 3] = [0.2, 0.1, 0.05];
const DEFAULT_COMPARE_TRIALS: usize = 30;

/// Parse arguments, run, write the artifact and return the exit status.
/// Help and version requests print to standard output and return 0.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(config) => run(&config),
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            0
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim().to_string());
            emit_error(&err);
            EXIT_INVALID
        }
    }
}

/// Run one subcommand: 0 on success, 1 on validation failure (with the error
/// JSON on standard error), 2 when a property suite fails.
pub fn run(config: &RunConfig) -> u8 {
    let result = execute(config).and_then(|out| {
        write_output(config.out.as_deref(), &out.text)?;
        Ok(out.passed)
    });
    match result {
        Ok(true) => 0,
        Ok(false) => EXIT_SUITE_FAILED,
        Err(e) => {
            emit_error(&e);
            EXIT_INVALID
        }
    }
}

fn emit_error(e: &CliError) {
    log::debug!("{e:?}");
    let json = serde_json::to_string(&e.report()).expect("error report serializes");
    eprintln!("{json}");
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Produce the artifact text without touching the filesystem beyond inputs.
pub fn execute(config: &RunConfig) -> CliResult<Output> {
    validate(config)?;
    let text = match config.command {
        Command::Decompose => decompose_cmd(config)?,
        Command::Hscore => hscore_cmd(config)?,
        Command::Kernel => kernel_cmd(config)?,
        Command::Svm => svm_cmd(config)?,
        Command::Compare => compare_cmd(config)?,
        Command::Fisher => fisher_cmd(config)?,
        Command::VerifyAll => return verify_cmd(config),
    };
    Ok(Output { text, passed: true })
}

fn validate(config: &RunConfig) -> CliResult<()> {
    let positive = |v: Option<f64>, field: &str| match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::invalid(
            field,
            format!("{x} is not a positive number"),
        )),
        _ => Ok(()),
    };
    positive(config.lambda, "lambda")?;
    positive(config.tol, "tol")?;
    if let Some(e) = config.eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::invalid("eps", format!("{e} is not a non-negative number")).into());
    }
    if config.trials == Some(0) {
        return Err(Error::invalid("trials", "at least one trial required").into());
    }
    if config.iters == Some(0) {
        return Err(Error::invalid("iters", "at least one iteration required").into());
    }
    let (lo, hi) = match config.command {
        Command::Decompose | Command::Fisher => (1, 1),
        Command::Hscore | Command::Svm => (2, 2),
        Command::Kernel => (1, 2),
        Command::Compare | Command::VerifyAll => (0, 0),
    };
    let n = config.inputs.len();
    if n < lo || n > hi {
        let want = if lo == hi {
            format!("{lo}")
        } else {
            format!("{lo} or {hi}")
        };
        return Err(Error::invalid("in", format!("expected {want} input file(s), got {n}")).into());
    }
    Ok(())
}

fn format_for(config: &RunConfig, default: Format, csv_ok: bool) -> CliResult<Format> {
    let f = config.format.unwrap_or(default);
    if f == Format::Csv && !csv_ok {
        return Err(Error::invalid("format", "this subcommand emits JSON only").into());
    }
    Ok(f)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// A joint distribution from JSON, or from an `x,y` sample CSV when the
/// path ends in `.csv`.
pub fn load_joint(path: &Path) -> CliResult<JointDistribution> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
        let pairs = read_samples_csv(file)?;
        return Ok(JointDistribution::from_samples(&pairs, None, None)?);
    }
    Ok(JointDistribution::from_json(&read(path)?)?)
}

enum FeatureOrKernel {
    Feature(Feature),
    Kernel(Kernel),
}

/// A feature (`values`) or kernel (`gram`) file, told apart by its keys.
fn load_feature_or_kernel(path: &Path) -> CliResult<FeatureOrKernel> {
    let text = read(path)?;
    let value: serde_json::Value = parse_json(&text)?;
    if value.get("gram").is_some() {
        Ok(FeatureOrKernel::Kernel(Kernel::from_json(&text)?))
    } else {
        Ok(FeatureOrKernel::Feature(Feature::from_json(&text)?))
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// `v` with 17 significant digits, round-trip exact.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(csv_float).unwrap_or_default()
}

fn decompose_cmd(config: &RunConfig) -> CliResult<String> {
    format_for(config, Format::Json, false)?;
    let joint = load_joint(&config.inputs[0])?;
    let dec = decompose(&joint, config.tol.unwrap_or(SIGMA_TOL));
    Ok(to_json(&dec.to_file()))
}

fn hscore_cmd(config: &RunConfig) -> CliResult<String> {
    format_for(config, Format::Json, false)?;
    let joint = load_joint(&config.inputs[0])?;
    let (h, spectrum) = match load_feature_or_kernel(&config.inputs[1])? {
        FeatureOrKernel::Feature(f) => {
            let f = f.align_to(joint.x_alphabet())?;
            (h_score(&f, &joint)?, moment_spectrum(&f, &joint)?)
        }
        FeatureOrKernel::Kernel(k) => {
            let nu = feature_map(&k, config.tol.unwrap_or(FEATURE_MAP_TOL))?;
            let nu = nu.align_to(joint.x_alphabet())?;
            (h_score_kernel(&k, &joint)?, moment_spectrum(&nu, &joint)?)
        }
    };
    Ok(to_json(&HscoreOutput {
        h_score: h,
        h_max: h_score_max(&joint),
        spectrum,
    }))
}

fn kernel_cmd(config: &RunConfig) -> CliResult<String> {
    format_for(config, Format::Json, false)?;
    let joint = load_joint(&config.inputs[0])?;
    let k = match config.inputs.get(1) {
        None => maximal_correlation_kernel(&joint)?,
        Some(p) => match load_feature_or_kernel(p)? {
            FeatureOrKernel::Feature(f) => {
                projection_kernel_pinv(&f.align_to(joint.x_alphabet())?, &joint.px())?
            }
            FeatureOrKernel::Kernel(k) => k,
        },
    };
    let model = kdm(&k, &joint)?;
    Ok(to_json(&KernelOutput {
        kernel: k.to_file(),
        y_alphabet: joint.y_alphabet().labels().to_vec(),
        kdm: crate::linalg::to_rows(model.table()),
    }))
}

fn svm_cmd(config: &RunConfig) -> CliResult<String> {
    let format = format_for(config, Format::Json, true)?;
    let joint = load_joint(&config.inputs[0])?;
    let f = match load_feature_or_kernel(&config.inputs[1])? {
        FeatureOrKernel::Feature(f) => f,
        FeatureOrKernel::Kernel(k) => feature_map(&k, config.tol.unwrap_or(FEATURE_MAP_TOL))?,
    };
    let f = f.align_to(joint.x_alphabet())?;
    let lambda_t = lambda_threshold(&f, &joint)?;
    let lambda = config
        .lambda
        .unwrap_or(if lambda_t > 0.0 { lambda_t } else { 1.0 });
    let (model, loss, gap, converged) = match config.solver {
        Solver::Closed => {
            let m = svm_closed_form(&f, &joint, lambda)?;
            let loss = svm_loss(&f, &joint, &m)?;
            (m, loss, None, None)
        }
        Solver::Generic => {
            let mut sc = SolverConfig::default();
            if let Some(it) = config.iters {
                sc.iterations = it;
            }
            let r = svm_solve_generic(&f, &joint, lambda, &sc)?;
            (r.model, r.loss, Some(r.duality_gap), Some(r.converged))
        }
    };
    let signs = joint.y_signs().expect("labels checked by the solver");
    let predictions = (0..joint.nx())
        .map(|x| {
            let decision = model.decision(&f.at(x));
            let sign = crate::classify::sign(decision);
            let y = signs
                .iter()
                .position(|&s| s == f64::from(sign))
                .unwrap_or(0);
            Prediction {
                x: joint.x_alphabet().label(x).to_string(),
                decision,
                sign,
                label: joint.y_alphabet().label(y).to_string(),
            }
        })
        .collect::<Vec<_>>();
    if format == Format::Csv {
        let mut s = String::from("x,decision,sign,label\n");
        for p in &predictions {
            writeln!(
                s,
                "{},{},{},{}",
                p.x,
                csv_float(p.decision),
                p.sign,
                p.label
            )
            .unwrap();
        }
        return Ok(s);
    }
    Ok(to_json(&SvmOutput {
        solver: format!("{:?}", config.solver).to_lowercase(),
        lambda,
        lambda_t,
        w: model.w().iter().copied().collect(),
        b: model.b(),
        loss,
        duality_gap: gap,
        converged,
        predictions,
    }))
}

/// Long-format records of the three comparison reports:
///
/// - `svm_lr`: BSC with crossover `½(1−ε)` for each `--eps`, whitened
///   indicator feature, `λ` from `--lambda` (default 1);
/// - `loss_sandwich`: random balanced joints with raw and whitened random
///   features at `λ = max(λ_T, --lambda)`;
/// - `kernel_routes`: random balanced joints, the maximal correlation kernel's
///   SVM against the MAP rule and the two closed-form routes.
pub fn compare_rows(config: &RunConfig) -> CliResult<Vec<CompareRow>> {
    let eps = if config.eps.is_empty() {
        DEFAULT_EPS.to_vec()
    } else {
        config.eps.clone()
    };
    let trials = config.trials.unwrap_or(DEFAULT_COMPARE_TRIALS);
    let mut rows = Vec::new();
    let mut push = |suite: &str, trial: usize, key: &str, value: f64| {
        rows.push(CompareRow {
            suite: suite.to_string(),
            trial,
            key: key.to_string(),
            value,
        })
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    let lambda = config.lambda.unwrap_or(1.0);
    for (t, &e) in eps.iter().enumerate() {
        if e > 1.0 {
            return Err(Error::invalid("eps", format!("{e} exceeds 1")).into());
        }
        let joint = JointDistribution::binary_symmetric(0.5 * (1.0 - e))?;
        let ind = Feature::indicators(joint.x_alphabet().clone()).component(0);
        let f = whiten(&ind, &joint.px())?;
        let c = compare_svm_lr(&f, &joint, lambda, LrBudget::default())?;
        push("svm_lr", t, "eps", e);
        push("svm_lr", t, "lambda", lambda);
        push("svm_lr", t, "w_gap", c.w_gap);
        push("svm_lr", t, "b_gap", c.b_gap);
        push("svm_lr", t, "agreement", c.agreement);
        push("svm_lr", t, "lr_capped", flag(c.lr.capped));
    }

    for t in 0..trials {
        let mut rng = SplitMix64::derive(config.seed, (1u64 << 32) | t as u64);
        let nx = rng.int(2, 9);
        let joint = random_balanced_binary(&mut rng, nx)?;
        let d = rng.int(1, 4);
        let raw = random_feature(&mut rng, joint.x_alphabet(), d);
        let white = whiten(&raw, &joint.px())?;
        for (name, f) in [("raw", &raw), ("whitened", &white)] {
            let lt = lambda_threshold(f, &joint)?;
            let lam = config.lambda.unwrap_or(0.0).max(lt).max(1e-3);
            let r = loss_sandwich(f, &joint, lam)?;
            let key = |k: &str| format!("{name}_{k}");
            push("loss_sandwich", t, &key("lambda"), lam);
            push("loss_sandwich", t, &key("loss"), r.loss);
            push("loss_sandwich", t, &key("lower"), r.lower);
            push("loss_sandwich", t, &key("upper"), r.upper);
            push("loss_sandwich", t, &key("whitened"), flag(r.whitened));
            push("loss_sandwich", t, &key("holds"), flag(r.holds));
        }
    }

    for t in 0..trials {
        let mut rng = SplitMix64::derive(config.seed, (2u64 << 32) | t as u64);
        let nx = rng.int(2, 9);
        let joint = random_balanced_binary(&mut rng, nx)?;
        let map = as_signs(&joint, &map_predict(&joint)?)?;
        let (svm_agree, routes_agree) = match maximal_correlation_kernel(&joint) {
            Ok(k) => {
                let r = kernel_svm_routes(&k, &joint)?;
                let decided = r.decided(1e-9);
                let svm = decided.iter().all(|&x| r.svm[x] == map[x]);
                let routes = decided
                    .iter()
                    .all(|&x| r.operator[x] == r.expectation[x] && r.kdm[x] == r.expectation[x]);
                (svm, routes)
            }
            // Independent draw: every rule is constant, nothing to compare.
            Err(Error::EmptyFeature(_)) => (true, true),
            Err(e) => return Err(e.into()),
        };
        push("kernel_routes", t, "nx", nx as f64);
        push("kernel_routes", t, "svm_matches_map", flag(svm_agree));
        push("kernel_routes", t, "routes_agree", flag(routes_agree));
    }
    Ok(rows)
}

fn compare_cmd(config: &RunConfig) -> CliResult<String> {
    let format = format_for(config, Format::Csv, true)?;
    let rows = compare_rows(config)?;
    if format == Format::Json {
        return Ok(to_json(&rows));
    }
    let mut s = String::from("suite,trial,key,value\n");
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{}",
            r.suite,
            r.trial,
            r.key,
            csv_float(r.value)
        )
        .unwrap();
    }
    Ok(s)
}

pub fn fisher_output(exp: &TiltExperiment, eps: &[f64]) -> CliResult<FisherOutput> {
    let report = exp.report(eps)?;
    let ratios = report.ratios();
    let rows = report
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let q = i.checked_sub(1).map(|j| ratios[j]).unwrap_or([None; 3]);
            FisherRow {
                eps: r.eps,
                e1: r.e1,
                e2: r.e2,
                e3: r.e3,
                ratio_e1: q[0],
                ratio_e2: q[1],
                ratio_e3: q[2],
                kdm_error: r.kdm_error,
                mutual_information: r.mutual_information,
                flagged: r.flagged,
            }
        })
        .collect();
    Ok(FisherOutput {
        rows,
        passes: report.passes(),
    })
}

fn fisher_cmd(config: &RunConfig) -> CliResult<String> {
    let format = format_for(config, Format::Csv, true)?;
    let exp = TiltExperiment::from_json(&read(&config.inputs[0])?)?;
    let eps = if config.eps.is_empty() {
        DEFAULT_EPS.to_vec()
    } else {
        config.eps.clone()
    };
    let out = fisher_output(&exp, &eps)?;
    if format == Format::Json {
        return Ok(to_json(&out));
    }
    let mut s = String::from(
        "eps,e1,e2,e3,ratio_e1,ratio_e2,ratio_e3,kdm_error,mutual_information,flagged\n",
    );
    for r in &out.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_float(r.eps),
            csv_float(r.e1),
            csv_opt(r.e2),
            csv_float(r.e3),
            csv_opt(r.ratio_e1),
            csv_opt(r.ratio_e2),
            csv_opt(r.ratio_e3),
            csv_float(r.kdm_error),
            csv_float(r.mutual_information),
            r.flagged
        )
        .unwrap();
    }
    Ok(s)
}

fn verify_cmd(config: &RunConfig) -> CliResult<Output> {
    let format = format_for(config, Format::Json, true)?;
    let defaults = VerifyConfig::default();
    let vc = VerifyConfig {
        seed: config.seed,
        trials: config.trials.unwrap_or(defaults.trials),
        iterations: config.iters.unwrap_or(defaults.iterations),
    };
    let known = crate::verify::suite_names();
    if let Some(bad) = config.suites.iter().find(|s| !known.contains(&s.as_str())) {
        return Err(Error::invalid("suite", format!("unknown suite `{bad}`")).into());
    }
    let only = (!config.suites.is_empty()).then_some(config.suites.as_slice());
    let summary: Summary = run_all(&vc, only);
    let text = match format {
        Format::Json => to_json(&summary),
        Format::Csv => {
            let mut s = String::from("suite,trials,passed,failed,max_error\n");
            for r in &summary.suites {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.name,
                    r.trials,
                    r.passed,
                    r.failed,
                    csv_float(r.max_error)
                )
                .unwrap();
            }
            s
        }
    };
    Ok(Output {
        text,
        passed: summary.passed,
    })
}
