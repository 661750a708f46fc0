//! Parametric families on a finite alphabet, their score functions and Fisher
//! kernels, and the small-`ε` mixture experiment comparing the Fisher kernel
//! with the maximal correlation kernel of the generated joint.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{Alphabet, JointDistribution, Marginal, MASS_TOL};
use crate::feature::{mean, Feature};
use crate::hscore::h_score;
use crate::kernel::{kdm, maximal_correlation_kernel, projection_kernel_pinv, Kernel};
use crate::linalg::{from_rows, positive_spectrum};
use crate::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Halving ratio below which an error counts as decaying faster than `ε`.
pub const LINEAR_RATIO: f64 = 0.75;
/// Halving ratio below which an error counts as decaying faster than `ε²`.
pub const QUADRATIC_RATIO: f64 = 0.35;

/// `θ ↦ π(·; θ)` on a fixed alphabet.
pub trait ParametricFamily: Sync {
    fn alphabet(&self) -> &Alphabet;

    fn param_dim(&self) -> usize;

    /// The full probability vector at `θ`; unvalidated.
    fn probs(&self, theta: &DVector<f64>) -> Vec<f64>;

    /// `∂/∂θ log π(x; θ)` as an `m × |X|` table, when known in closed form.
    fn analytic_score(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `π(·; θ)` checked for positivity and unit mass.
pub fn evaluate(family: &dyn ParametricFamily, theta: &DVector<f64>) -> Result<Vec<f64>> {
    if theta.len() != family.param_dim() {
        return Err(Error::invalid(
            "theta",
            format!(
                "expected {} parameters, got {}",
                family.param_dim(),
                theta.len()
            ),
        ));
    }
    let p = family.probs(theta);
    if p.len() != family.alphabet().len() {
        return Err(Error::Domain(format!(
            "family returned {} probabilities for {} symbols",
            p.len(),
            family.alphabet().len()
        )));
    }
    if let Some((x, v)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "π({}; θ) = {v} is not positive at θ = {:?}",
            family.alphabet().label(x),
            theta.as_slice()
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Domain(format!("π(·; θ) sums to {total}")));
    }
    Ok(p)
}

/// `π(x; θ) ∝ base(x) exp(⟨θ, t(x)⟩)`.
#[derive(Debug, Clone)]
pub struct ExponentialTilt {
    base: Marginal,
    stats: DMatrix<f64>,
}

impl ExponentialTilt {
    /// `stats` is `m × |X|`: one row per sufficient statistic.
    pub fn new(base: Marginal, stats: DMatrix<f64>) -> Result<Self> {
        if stats.ncols() != base.len() {
            return Err(Error::invalid("stats", "one column per symbol expected"));
        }
        if stats.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("stats", "non-finite statistic"));
        }
        if let Some(x) = base.probs().iter().position(|&p| !(p > 0.0)) {
            return Err(Error::invalid(
                format!("base[{x}]"),
                "base must be positive",
            ));
        }
        Ok(ExponentialTilt { base, stats })
    }

    pub fn base(&self) -> &Marginal {
        &self.base
    }

    /// The sufficient statistics as a feature.
    pub fn stats(&self) -> Feature {
        Feature::new(self.base.alphabet().clone(), self.stats.clone()).expect("validated")
    }

    fn log_weights(&self, theta: &DVector<f64>) -> Vec<f64> {
        (0..self.base.len())
            .map(|x| self.base.probs()[x].ln() + theta.dot(&self.stats.column(x)))
            .collect()
    }
}

impl ParametricFamily for ExponentialTilt {
    fn alphabet(&self) -> &Alphabet {
        self.base.alphabet()
    }

    fn param_dim(&self) -> usize {
        self.stats.nrows()
    }

    fn probs(&self, theta: &DVector<f64>) -> Vec<f64> {
        let lw = self.log_weights(theta);
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    fn analytic_score(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.probs(theta);
        let et: DVector<f64> = &self.stats * DVector::from_vec(p);
        let mut s = self.stats.clone();
        for mut col in s.column_iter_mut() {
            col -= &et;
        }
        Some(s)
    }
}

/// A family given by a closure, without a closed-form score.
pub struct FnFamily<F> {
    alphabet: Alphabet,
    dim: usize,
    f: F,
}

impl<F: Fn(&DVector<f64>) -> Vec<f64> + Sync> FnFamily<F> {
    pub fn new(alphabet: Alphabet, dim: usize, f: F) -> Self {
        FnFamily { alphabet, dim, f }
    }
}

impl<F: Fn(&DVector<f64>) -> Vec<f64> + Sync> ParametricFamily for FnFamily<F> {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn probs(&self, theta: &DVector<f64>) -> Vec<f64> {
        (self.f)(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMethod {
    /// Closed form if the family has one, else central differences with `h`.
    Auto {
        h: f64,
    },
    Analytic,
    CentralDifference {
        h: f64,
    },
    /// Central differences at `h` and `h/2` combined to cancel the `h²` term.
    Richardson {
        h: f64,
    },
}

impl Default for ScoreMethod {
    fn default() -> Self {
        ScoreMethod::Auto { h: DEFAULT_STEP }
    }
}

/// Score `s(x) = ∇_θ log π(x; θ₀)`, with the evaluation point and step kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFeature {
    pub feature: Feature,
    pub theta0: DVector<f64>,
    /// Finite-difference step, 0 for a closed-form score.
    pub h: f64,
}

fn central(family: &dyn ParametricFamily, theta0: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", "step must be positive"));
    }
    let m = family.param_dim();
    let n = family.alphabet().len();
    let mut s = DMatrix::zeros(m, n);
    for i in 0..m {
        let mut plus = theta0.clone();
        plus[i] += h;
        let mut minus = theta0.clone();
        minus[i] -= h;
        let (pp, pm) = (evaluate(family, &plus)?, evaluate(family, &minus)?);
        for x in 0..n {
            s[(i, x)] = (pp[x].ln() - pm[x].ln()) / (2.0 * h);
        }
    }
    Ok(s)
}

pub fn score_function(
    family: &dyn ParametricFamily,
    theta0: &DVector<f64>,
    method: ScoreMethod,
) -> Result<ScoreFeature> {
    let p0 = evaluate(family, theta0)?;
    let (values, h) = match method {
        ScoreMethod::Analytic => (
            family
                .analytic_score(theta0)
                .ok_or_else(|| Error::invalid("method", "family has no closed-form score"))?,
            0.0,
        ),
        ScoreMethod::Auto { h } => match family.analytic_score(theta0) {
            Some(s) => (s, 0.0),
            None => (central(family, theta0, h)?, h),
        },
        ScoreMethod::CentralDifference { h } => (central(family, theta0, h)?, h),
        ScoreMethod::Richardson { h } => {
            let coarse = central(family, theta0, h)?;
            let fine = central(family, theta0, 0.5 * h)?;
            ((fine * 4.0 - coarse) / 3.0, h)
        }
    };
    let feature = Feature::new(family.alphabet().clone(), values)
        .map_err(|_| Error::Domain("score is not finite".into()))?;
    let px = Marginal::new(family.alphabet().clone(), p0)?;
    let drift = mean(&feature, &px)?.amax();
    if drift > (10.0 * h * h).max(1e-8) {
        log::warn!("score mean {drift:e} is not zero under π(·; θ₀)");
    }
    Ok(ScoreFeature {
        feature,
        theta0: theta0.clone(),
        h,
    })
}

/// Projection kernel of the score at `θ₀`, with `Λ_s` pseudo-inverted.
pub fn fisher_kernel(
    family: &dyn ParametricFamily,
    theta0: &DVector<f64>,
    px: &Marginal,
) -> Result<Kernel> {
    let s = score_function(family, theta0, ScoreMethod::default())?;
    score_kernel(&s.feature, px)
}

fn score_kernel(s: &Feature, px: &Marginal) -> Result<Kernel> {
    let lam = crate::feature::second_moment(s, px)?;
    let rank = positive_spectrum(&lam, crate::feature::GRAM_CUTOFF).len();
    if rank == 0 {
        log::warn!("score is identically zero: Fisher kernel is zero");
    } else if rank < s.dim() {
        log::warn!(
            "score second moment is singular (rank {rank} of {}); pseudo-inverting",
            s.dim()
        );
    }
    projection_kernel_pinv(s, px)
}

/// `P(x, y) = P_Y(y) π(x; θ_y)`.
pub fn generate_mixture(
    family: &dyn ParametricFamily,
    thetas: &[DVector<f64>],
    py: &Marginal,
) -> Result<JointDistribution> {
    if thetas.len() != py.len() {
        return Err(Error::invalid(
            "thetas",
            format!("{} parameters for {} labels", thetas.len(), py.len()),
        ));
    }
    let n = family.alphabet().len();
    let mut table = DMatrix::zeros(n, py.len());
    for (y, theta) in thetas.iter().enumerate() {
        let p = evaluate(family, theta)?;
        for x in 0..n {
            table[(x, y)] = py.probs()[y] * p[x];
        }
    }
    JointDistribution::new(family.alphabet().clone(), py.alphabet().clone(), table)
}

/// One `ε` of the mixture experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRow {
    pub eps: f64,
    /// `max |P(x,y) − P_X(x)P_Y(y)(1 + ⟨s(x), θ̃_y⟩)|`.
    pub e1: f64,
    /// `max |𝓀_s − 𝓀*|`; `None` when the joint is independent.
    pub e2: Option<f64>,
    /// `|H(s) − I(X;Y)|`.
    pub e3: f64,
    /// `max |P^{(𝓀_s)}(y|x) − P_{Y|X}(y|x)|`.
    pub kdm_error: f64,
    pub mutual_information: f64,
    pub thetas: Vec<DVector<f64>>,
    pub thetas_centered: Vec<DVector<f64>>,
    /// Set when a quantity is undefined at this `ε`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureReport {
    pub rows: Vec<MixtureRow>,
}

/// `b/a` with `0/0 = 0`, `None` when either side is missing.
fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        (Some(_), Some(0.0)) => Some(0.0),
        _ => None,
    }
}

impl MixtureReport {
    /// Ratios `e(ε_{k+1}) / e(ε_k)` of consecutive rows for `e₁, e₂, e₃`.
    pub fn ratios(&self) -> Vec<[Option<f64>; 3]> {
        self.rows
            .windows(2)
            .map(|w| {
                [
                    ratio(Some(w[0].e1), Some(w[1].e1)),
                    ratio(w[0].e2, w[1].e2),
                    ratio(Some(w[0].e3), Some(w[1].e3)),
                ]
            })
            .collect()
    }

    /// Every defined ratio below its threshold: `e₁, e₂` faster than `ε`,
    /// `e₃` faster than `ε²`.
    pub fn passes(&self) -> bool {
        !self.rows.iter().any(|r| r.flagged)
            && self.ratios().iter().all(|r| {
                r[0].is_some_and(|v| v < LINEAR_RATIO)
                    && r[1].is_some_and(|v| v < LINEAR_RATIO)
                    && r[2].is_some_and(|v| v < QUADRATIC_RATIO)
            })
    }
}

/// Mixture experiment with `θ_y = ε u_y`, one row per entry of `epsilons`
/// (in the given order). The score is taken at `θ = 0`.
pub fn mixture_report(
    family: &dyn ParametricFamily,
    directions: &[DVector<f64>],
    epsilons: &[f64],
    py: &Marginal,
) -> Result<MixtureReport> {
    if directions.len() != py.len() {
        return Err(Error::invalid(
            "directions",
            "one direction per label expected",
        ));
    }
    if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::invalid(
            "eps",
            format!("{e} is not a non-negative number"),
        ));
    }
    let zero = DVector::zeros(family.param_dim());
    let s = score_function(family, &zero, ScoreMethod::default())?.feature;
    let rows = epsilons
        .par_iter()
        .map(|&eps| mixture_row(family, &s, directions, eps, py))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureReport { rows })
}

fn mixture_row(
    family: &dyn ParametricFamily,
    s: &Feature,
    directions: &[DVector<f64>],
    eps: f64,
    py: &Marginal,
) -> Result<MixtureRow> {
    let thetas: Vec<DVector<f64>> = directions.iter().map(|u| u * eps).collect();
    let joint = generate_mixture(family, &thetas, py)?;
    let mut center = DVector::zeros(family.param_dim());
    for (t, &q) in thetas.iter().zip(py.probs()) {
        center += t * q;
    }
    let thetas_centered: Vec<DVector<f64>> = thetas.iter().map(|t| t - &center).collect();

    let (px, pyj) = joint.marginals();
    let mut e1: f64 = 0.0;
    for x in 0..joint.nx() {
        let sx = s.at(x);
        for (y, tc) in thetas_centered.iter().enumerate() {
            let approx = px.probs()[x] * pyj.probs()[y] * (1.0 + sx.dot(tc));
            e1 = e1.max((joint.p(x, y) - approx).abs());
        }
    }

    let ks = score_kernel(s, &px)?;
    let (e2, flagged) = match maximal_correlation_kernel(&joint) {
        Ok(kstar) => (Some((ks.gram() - kstar.gram()).amax()), false),
        Err(Error::EmptyFeature(_)) => {
            log::info!("ε = {eps}: X and Y independent, maximal correlation kernel undefined");
            (None, true)
        }
        Err(e) => return Err(e),
    };

    let mi = joint.mutual_information();
    let e3 = (h_score(s, &joint)? - mi).abs();
    let model = kdm(&ks, &joint)?;
    let post = joint.conditional_y_given_x()?;
    let kdm_error = (model.table() - post).amax();
    Ok(MixtureRow {
        eps,
        e1,
        e2,
        e3,
        kdm_error,
        mutual_information: mi,
        thetas,
        thetas_centered,
        flagged,
    })
}

/// JSON layout of an exponential-tilt mixture experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltExperimentFile {
    pub alphabet: Vec<String>,
    pub base: Vec<f64>,
    /// One row per sufficient statistic.
    pub stats: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub py: Vec<f64>,
    /// One direction `u_y` per label.
    pub directions: Vec<Vec<f64>>,
}

/// A parsed [`TiltExperimentFile`].
#[derive(Debug, Clone)]
pub struct TiltExperiment {
    pub family: ExponentialTilt,
    pub py: Marginal,
    pub directions: Vec<DVector<f64>>,
}

impl TiltExperiment {
    pub fn from_file(file: TiltExperimentFile) -> Result<Self> {
        let alphabet = Alphabet::new(file.alphabet)?;
        let stats = from_rows(&file.stats, alphabet.len(), "stats")?;
        let family = ExponentialTilt::new(Marginal::new(alphabet, file.base)?, stats)?;
        let py = Marginal::new(Alphabet::new(file.labels)?, file.py)?;
        if file.directions.len() != py.len() {
            return Err(Error::invalid(
                "directions",
                "one direction per label expected",
            ));
        }
        let m = family.param_dim();
        let directions = from_rows(&file.directions, m, "directions")?
            .row_iter()
            .map(|r| r.transpose())
            .collect();
        Ok(TiltExperiment {
            family,
            py,
            directions,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        TiltExperiment::from_file(crate::dist::parse_json(s)?)
    }

    pub fn to_file(&self) -> TiltExperimentFile {
        TiltExperimentFile {
            alphabet: self.family.alphabet().labels().to_vec(),
            base: self.family.base().probs().to_vec(),
            stats: crate::linalg::to_rows(&self.family.stats),
            labels: self.py.alphabet().labels().to_vec(),
            py: self.py.probs().to_vec(),
            directions: self
                .directions
                .iter()
                .map(|d| d.iter().copied().collect())
                .collect(),
        }
    }

    pub fn report(&self, epsilons: &[f64]) -> Result<MixtureReport> {
        mixture_report(&self.family, &self.directions, epsilons, &self.py)
    }
}
