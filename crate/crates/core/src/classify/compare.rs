//! Reports tying the SVM to the modal structure: loss bounds, agreement of the
//! kernel SVM with operator and KDM decisions, and SVM vs logistic regression.

use nalgebra::DMatrix;

use super::logistic::{logistic_fit, lr_predict, LrBudget, LrFit};
use super::svm::{
    expected_fy, kernel_svm_predict, lambda_threshold, svm_closed_form, svm_loss, svm_predict,
    svm_solve_generic, SolverConfig, SvmModel,
};
use super::{balanced_signs, sign};
use crate::dist::JointDistribution;
use crate::feature::{center, second_moment, Feature};
use crate::hscore::{h_score, moment_spectrum};
use crate::kernel::{center_kernel, kdm, kdm_predict, Kernel};
use crate::modal::{decompose, SIGMA_TOL};
use crate::{Error, Result};

/// Tolerance on `Λ_{f̃} = I` for a feature to count as whitened.
pub const WHITE_TOL: f64 = 1e-8;

/// `(L̂*, L̂* + (λ_T/λ − 1)⁺, λ_T)` with `L̂* = 1 − ‖E[fY]‖²/(2λ)`; the optimal
/// SVM loss lies between the first two.
pub fn svm_loss_bounds(
    f: &Feature,
    joint: &JointDistribution,
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    let lt = lambda_threshold(f, joint)?;
    let lower = 1.0 - expected_fy(f, joint)?.norm_squared() / (2.0 * lambda);
    Ok((lower, lower + (lt / lambda - 1.0).max(0.0), lt))
}

fn is_whitened(f: &Feature, joint: &JointDistribution) -> Result<bool> {
    let px = joint.px();
    let cov = second_moment(&center(f, &px)?, &px)?;
    Ok((cov - DMatrix::identity(f.dim(), f.dim())).amax() <= WHITE_TOL)
}

/// Three closed-form routes to the kernel SVM decision, plus the trained
/// kernel SVM itself; all as `±1` per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSvmRoutes {
    /// Kernel SVM trained on an explicit feature map.
    pub svm: Vec<i8>,
    /// `sign([τ̃(f*)](x))` with `f*` oriented so `E[f*(X)Y] > 0`.
    pub operator: Vec<i8>,
    /// `sign(E[𝓀̃(X,x)Y])`.
    pub expectation: Vec<i8>,
    /// KDM argmax mapped to `±1`.
    pub kdm: Vec<i8>,
    pub operator_values: Vec<f64>,
    pub expectation_values: Vec<f64>,
}

impl KernelSvmRoutes {
    /// Symbols where the decision value is at least `band` from zero.
    pub fn decided(&self, band: f64) -> Vec<usize> {
        (0..self.expectation_values.len())
            .filter(|&x| self.expectation_values[x].abs() > band)
            .collect()
    }
}

pub fn kernel_svm_routes(k: &Kernel, joint: &JointDistribution) -> Result<KernelSvmRoutes> {
    let s = balanced_signs(joint)?;
    let px = joint.px();
    let kc = center_kernel(k, &px)?;
    let n = joint.nx();

    let expectation_values: Vec<f64> = (0..n)
        .map(|x| {
            (0..n)
                .map(|a| kc.at(a, x) * (0..2).map(|y| joint.p(a, y) * s[y]).sum::<f64>())
                .sum()
        })
        .collect();

    let dec = decompose(joint, SIGMA_TOL);
    let operator_values: Vec<f64> = if dec.k() == 0 {
        vec![0.0; n]
    } else {
        let f = dec.f_star().row(0);
        let efy: f64 = (0..n)
            .map(|a| f[a] * (0..2).map(|y| joint.p(a, y) * s[y]).sum::<f64>())
            .sum();
        let orient = if efy < 0.0 { -1.0 } else { 1.0 };
        (0..n)
            .map(|x| {
                orient
                    * (0..n)
                        .map(|a| px.probs()[a] * kc.at(a, x) * f[a])
                        .sum::<f64>()
            })
            .collect()
    };

    let model = kdm(k, joint)?;
    let kdm_signs = kdm_predict(&model)
        .into_iter()
        .map(|y| sign(s[y]))
        .collect();
    Ok(KernelSvmRoutes {
        svm: kernel_svm_predict(k, joint)?,
        operator: operator_values.iter().map(|&v| sign(v)).collect(),
        expectation: expectation_values.iter().map(|&v| sign(v)).collect(),
        kdm: kdm_signs,
        operator_values,
        expectation_values,
    })
}

#[derive(Debug, Clone)]
pub struct SvmLrComparison {
    /// `‖w_LR − 2λ w_SVM‖`.
    pub w_gap: f64,
    /// `|b_LR − 2λ b_SVM|`.
    pub b_gap: f64,
    /// Fraction of symbols on which the two classifiers agree.
    pub agreement: f64,
    pub svm: SvmModel,
    pub lr: LrFit,
}

/// Train both classifiers on a whitened feature and compare `w_LR` with
/// `2λ w_SVM`. Below `λ_T` the SVM comes from the generic solver.
pub fn compare_svm_lr(
    f: &Feature,
    joint: &JointDistribution,
    lambda: f64,
    budget: LrBudget,
) -> Result<SvmLrComparison> {
    balanced_signs(joint)?;
    if !is_whitened(f, joint)? {
        return Err(Error::Precondition(
            "feature must be whitened: centered second moment ≠ I".into(),
        ));
    }
    let svm = if lambda >= lambda_threshold(f, joint)? {
        svm_closed_form(f, joint, lambda)?
    } else {
        svm_solve_generic(f, joint, lambda, &SolverConfig::default())?.model
    };
    let lr = logistic_fit(f, joint, budget)?;
    let w_gap = (&lr.model.w - svm.w() * (2.0 * lambda)).norm();
    let b_gap = (lr.model.b - 2.0 * lambda * svm.b()).abs();
    let a = svm_predict(f, &svm)?;
    let b = lr_predict(f, &lr.model)?;
    let agree = a.iter().zip(&b).filter(|(p, q)| p == q).count();
    Ok(SvmLrComparison {
        w_gap,
        b_gap,
        agreement: agree as f64 / a.len() as f64,
        svm,
        lr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    /// Optimal SVM loss.
    pub loss: f64,
    /// `1 − r_max H(f̃)/λ`.
    pub lower: f64,
    /// `1 − r_min H(f̃)/λ`.
    pub upper: f64,
    pub h_centered: f64,
    pub r_max: f64,
    pub r_min: f64,
    pub whitened: bool,
    pub holds: bool,
}

/// Slack for the bound checks in [`loss_sandwich`].
pub const SANDWICH_TOL: f64 = 1e-9;

/// Bracket the optimal SVM loss by the H-score of `f̃` scaled with the extreme
/// positive eigenvalues of `Λ_{f̃}`; equality when `f` is whitened.
pub fn loss_sandwich(
    f: &Feature,
    joint: &JointDistribution,
    lambda: f64,
) -> Result<SandwichReport> {
    let model = svm_closed_form(f, joint, lambda)?;
    let loss = svm_loss(f, joint, &model)?;
    let ft = center(f, &joint.px())?;
    let h = h_score(&ft, joint)?;
    let spec = moment_spectrum(&ft, joint)?;
    let r_max = spec.first().copied().unwrap_or(0.0);
    let r_min = spec.last().copied().unwrap_or(0.0);
    let lower = 1.0 - r_max * h / lambda;
    let upper = 1.0 - r_min * h / lambda;
    let whitened = is_whitened(f, joint)?;
    let mut holds = lower - SANDWICH_TOL <= loss && loss <= upper + SANDWICH_TOL;
    if whitened {
        holds &= (loss - (1.0 - h / lambda)).abs() <= SANDWICH_TOL;
    }
    Ok(SandwichReport {
        loss,
        lower,
        upper,
        h_centered: h,
        r_max,
        r_min,
        whitened,
        holds,
    })
}
