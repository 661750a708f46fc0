//! Binary classification on balanced `Y ∈ {-1, +1}`: SVMs on features and
//! kernels, MAP and logistic regression, and reports comparing them.

mod compare;
mod logistic;
mod svm;

pub use compare::{
    compare_svm_lr, kernel_svm_routes, loss_sandwich, svm_loss_bounds, KernelSvmRoutes,
    SandwichReport, SvmLrComparison,
};
pub use logistic::{
    logistic_fit, logistic_gradient, logistic_loss, lr_predict, LrBudget, LrFit, LrModel,
};
pub use svm::{
    expected_fy, hinge_loss, kernel_svm_predict, lambda_threshold, svm_closed_form, svm_loss,
    svm_predict, svm_solve_generic, SolverConfig, SolverReport, SvmModel,
};

use crate::dist::JointDistribution;
use crate::kernel::argmax_first;
use crate::{Error, Result};

/// Tolerance on `P_Y(±1) = 1/2`.
pub const BALANCE_TOL: f64 = 1e-9;

/// `true` iff `Y = {-1, +1}` with `P_Y(-1) = P_Y(+1) = 1/2`.
pub fn check_balanced_binary(joint: &JointDistribution) -> bool {
    joint.y_signs().is_some()
        && joint
            .py()
            .probs()
            .iter()
            .all(|p| (p - 0.5).abs() <= BALANCE_TOL)
}

/// Numeric label of each y-index, or an error unless the labels are `{-1, +1}`.
pub(crate) fn binary_signs(joint: &JointDistribution) -> Result<Vec<f64>> {
    joint.y_signs().ok_or_else(|| {
        Error::Precondition(format!(
            "labels must be {{-1, +1}}, got {:?}",
            joint.y_alphabet().labels()
        ))
    })
}

/// Numeric labels, additionally requiring a balanced label distribution.
pub(crate) fn balanced_signs(joint: &JointDistribution) -> Result<Vec<f64>> {
    let signs = binary_signs(joint)?;
    if !check_balanced_binary(joint) {
        return Err(Error::Precondition(format!(
            "P_Y = {:?} is not balanced",
            joint.py().probs()
        )));
    }
    Ok(signs)
}

/// `sign` with `sign(0) = +1`.
pub fn sign(v: f64) -> i8 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

/// MAP rule `argmax_y P_{Y|X}(y|x)` as y-indices, ties to the earliest label.
pub fn map_predict(joint: &JointDistribution) -> Result<Vec<usize>> {
    let post = joint.conditional_y_given_x()?;
    Ok((0..post.nrows())
        .map(|x| argmax_first(post.row(x).iter().copied()))
        .collect())
}

/// Map y-index predictions to `±1` using the numeric labels of `joint`.
pub fn as_signs(joint: &JointDistribution, predictions: &[usize]) -> Result<Vec<i8>> {
    let s = binary_signs(joint)?;
    Ok(predictions.iter().map(|&y| sign(s[y])).collect())
}
