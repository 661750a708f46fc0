//! H-scores of features, projection kernels and subspaces.
//!
//! `H(f) = ½ E_Y ‖Λ_f^{-1/2} E[f̃(X) | Y]‖²`, where `f̃` is the centered feature
//! and `Λ_f = E[f fᵀ]` is the second moment of `f` itself. With this
//! normalization `H(f)` depends only on `span{f}`, which is what makes the
//! kernel form `½(E_{P_{XX'}}[𝓀] − E_{P_X P_X'}[𝓀])` agree with it.

use nalgebra::{DMatrix, DVector};

use crate::dist::JointDistribution;
use crate::feature::{
    center, norm, project, same_alphabet, second_moment, Feature, FeatureSubspace, GRAM_CUTOFF,
};
use crate::kernel::Kernel;
use crate::linalg::{pinv_sqrt_sym, positive_spectrum};
use crate::modal::{decompose, f_star_feature, SIGMA_TOL};
use crate::{Error, Result};

/// Conditional means `E[f̃(X) | Y = y]`, one column per `y`.
fn centered_class_means(f: &Feature, joint: &JointDistribution) -> Result<DMatrix<f64>> {
    let px = joint.px();
    let ft = center(f, &px)?;
    let cond = joint.conditional_x_given_y()?;
    Ok(ft.values() * cond)
}

/// H-score of a feature. Redundant directions of `Λ_f` are dropped through a
/// thresholded pseudo-inverse square root.
pub fn h_score(f: &Feature, joint: &JointDistribution) -> Result<f64> {
    same_alphabet(f.alphabet(), joint.x_alphabet())?;
    let px = joint.px();
    let py = joint.py();
    let root = pinv_sqrt_sym(&second_moment(f, &px)?, GRAM_CUTOFF);
    let means = centered_class_means(f, joint)?;
    let mut total = 0.0;
    for (y, &q) in py.probs().iter().enumerate() {
        let m: DVector<f64> = &root * means.column(y);
        total += q * m.norm_squared();
    }
    Ok(0.5 * total)
}

/// Eigenvalues of `Λ_f` above the pseudo-inverse cutoff, descending.
pub fn moment_spectrum(f: &Feature, joint: &JointDistribution) -> Result<Vec<f64>> {
    Ok(positive_spectrum(
        &second_moment(f, &joint.px())?,
        GRAM_CUTOFF,
    ))
}

/// `H(f*) = ½ Σ σᵢ²`.
pub fn h_score_max(joint: &JointDistribution) -> f64 {
    decompose(joint, SIGMA_TOL).half_energy()
}

/// `½ (E_{P_{XX'}}[𝓀(X,X')] − E_{P_X P_{X'}}[𝓀(X,X')])`.
///
/// Equals the H-score of the subspace when `k` is a projection kernel; for
/// other kernels the value carries no such guarantee.
pub fn h_score_kernel(k: &Kernel, joint: &JointDistribution) -> Result<f64> {
    same_alphabet(k.alphabet(), joint.x_alphabet())?;
    let xx = joint.xx_prime();
    let p = joint.px();
    let n = joint.nx();
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            total += (xx.p(a, b) - p.probs()[a] * p.probs()[b]) * k.at(a, b);
        }
    }
    Ok(0.5 * total)
}

/// `(ϱ²/2) ‖Π(f* | G)‖²` for binary `Y`.
pub fn subspace_h_score_binary(g: &FeatureSubspace, joint: &JointDistribution) -> Result<f64> {
    if joint.ny() != 2 {
        return Err(Error::Precondition(format!(
            "binary Y required, |Y| = {}",
            joint.ny()
        )));
    }
    let dec = decompose(joint, SIGMA_TOL);
    if dec.k() == 0 {
        return Ok(0.0);
    }
    let fs = f_star_feature(&dec)?;
    let proj = project(&fs, g)?;
    let rho = dec.rho();
    Ok(0.5 * rho * rho * norm(&proj, &joint.px())?.powi(2))
}
