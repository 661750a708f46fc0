//! Logistic regression `P(y|x) ∝ exp(y(⟨w, f(x)⟩ + b))` on `Y ∈ {-1, +1}`.

use nalgebra::DVector;

use super::{balanced_signs, binary_signs, sign};
use crate::dist::JointDistribution;
use crate::feature::{same_alphabet, Feature};
use crate::{Error, Result};

/// Weights beyond this norm signal a separable problem with no finite optimum.
pub const WEIGHT_CAP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub w: DVector<f64>,
    pub b: f64,
}

impl LrModel {
    pub fn new(w: DVector<f64>, b: f64) -> Result<Self> {
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("w", "non-finite parameter"));
        }
        Ok(LrModel { w, b })
    }

    pub fn decision(&self, v: &DVector<f64>) -> f64 {
        self.w.dot(v) + self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrBudget {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LrBudget {
    fn default() -> Self {
        LrBudget {
            max_iter: 100_000,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LrFit {
    pub model: LrModel,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// `‖w‖` hit [`WEIGHT_CAP`] and was clipped.
    pub capped: bool,
}

/// `log(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn check(f: &Feature, joint: &JointDistribution, model: &LrModel) -> Result<Vec<f64>> {
    same_alphabet(f.alphabet(), joint.x_alphabet())?;
    if model.w.len() != f.dim() {
        return Err(Error::invalid("w", "dimension does not match the feature"));
    }
    binary_signs(joint)
}

/// `−E[log σ(Y(⟨w, f(X)⟩ + b))]`.
pub fn logistic_loss(f: &Feature, joint: &JointDistribution, model: &LrModel) -> Result<f64> {
    let s = check(f, joint, model)?;
    let mut total = 0.0;
    for x in 0..joint.nx() {
        let z = model.decision(&f.at(x));
        for (y, &sy) in s.iter().enumerate() {
            total += joint.p(x, y) * softplus(-sy * z);
        }
    }
    Ok(total)
}

/// Gradient of [`logistic_loss`] in `(w, b)`; the last entry is `∂/∂b`.
pub fn logistic_gradient(
    f: &Feature,
    joint: &JointDistribution,
    model: &LrModel,
) -> Result<DVector<f64>> {
    let s = check(f, joint, model)?;
    let d = f.dim();
    let mut g = DVector::zeros(d + 1);
    for x in 0..joint.nx() {
        let fx = f.at(x);
        let z = model.decision(&fx);
        for (y, &sy) in s.iter().enumerate() {
            let c = -joint.p(x, y) * sy * sigmoid(-sy * z);
            g.rows_mut(0, d).axpy(c, &fx, 1.0);
            g[d] += c;
        }
    }
    Ok(g)
}

/// `true` if every atom with positive mass has a strictly positive margin.
fn separates(f: &Feature, joint: &JointDistribution, model: &LrModel) -> bool {
    let s = joint.y_signs().unwrap_or_default();
    model.w.norm() > 0.0
        && (0..joint.nx()).all(|x| {
            let z = model.decision(&f.at(x));
            (0..joint.ny()).all(|y| joint.p(x, y) <= 0.0 || s[y] * z > 0.0)
        })
}

/// Full-batch gradient descent from zero with Armijo backtracking.
pub fn logistic_fit(f: &Feature, joint: &JointDistribution, budget: LrBudget) -> Result<LrFit> {
    balanced_signs(joint)?;
    let d = f.dim();
    let mut model = LrModel::new(DVector::zeros(d), 0.0)?;
    let mut loss = logistic_loss(f, joint, &model)?;
    let mut step = 1.0;
    let mut grad = logistic_gradient(f, joint, &model)?;
    let mut iterations = 0;
    let mut capped = false;
    while iterations < budget.max_iter && grad.norm() >= budget.grad_tol {
        iterations += 1;
        let g2 = grad.norm_squared();
        step *= 2.0;
        let (next, next_loss) = loop {
            let cand = LrModel {
                w: &model.w - grad.rows(0, d) * step,
                b: model.b - step * grad[d],
            };
            let l = logistic_loss(f, joint, &cand)?;
            if l <= loss - 0.5 * step * g2 || step < 1e-20 {
                break (cand, l);
            }
            step *= 0.5;
        };
        if next_loss > loss {
            break;
        }
        model = next;
        loss = next_loss;
        if separates(f, joint, &model) {
            // A strict separator can be scaled up forever: no finite optimum.
            let scale = WEIGHT_CAP / model.w.norm();
            model.w *= scale;
            model.b *= scale;
            capped = true;
            log::warn!("logistic weights diverge (separable data); capped at ‖w‖ = {WEIGHT_CAP}");
            grad = logistic_gradient(f, joint, &model)?;
            break;
        }
        grad = logistic_gradient(f, joint, &model)?;
    }
    let grad_norm = grad.norm();
    let converged = !capped && grad_norm < budget.grad_tol;
    if !converged && !capped {
        log::warn!("logistic fit stopped after {iterations} iterations, ‖∇‖ = {grad_norm:e}");
    }
    Ok(LrFit {
        model,
        iterations,
        grad_norm,
        converged,
        capped,
    })
}

pub fn lr_predict(f: &Feature, model: &LrModel) -> Result<Vec<i8>> {
    if model.w.len() != f.dim() {
        return Err(Error::invalid("w", "dimension does not match the feature"));
    }
    Ok((0..f.alphabet().len())
        .map(|x| sign(model.decision(&f.at(x))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Alphabet, Marginal};
    use crate::rng::{random_balanced_binary, random_feature, SplitMix64};

    #[test]
    fn independent_gives_zero() {
        let px = Marginal::new(Alphabet::indexed(3).unwrap(), vec![0.2, 0.3, 0.5]).unwrap();
        let py = Marginal::new(Alphabet::new(["-1", "1"]).unwrap(), vec![0.5, 0.5]).unwrap();
        let j = JointDistribution::product(&px, &py).unwrap();
        let mut rng = SplitMix64::new(3);
        let f = random_feature(&mut rng, j.x_alphabet(), 2);
        let fit = logistic_fit(&f, &j, LrBudget::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.model.w.amax() < 1e-12 && fit.model.b.abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(4);
        let j = random_balanced_binary(&mut rng, 5).unwrap();
        let f = random_feature(&mut rng, j.x_alphabet(), 2);
        let m = LrModel::new(DVector::from_vec(vec![0.3, -0.7]), 0.2).unwrap();
        let g = logistic_gradient(&f, &j, &m).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let bump = |e: f64| {
                let mut mm = m.clone();
                if i < 2 {
                    mm.w[i] += e;
                } else {
                    mm.b += e;
                }
                logistic_loss(&f, &j, &mm).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn fit_reaches_stationarity() {
        let mut rng = SplitMix64::new(5);
        let j = random_balanced_binary(&mut rng, 6).unwrap();
        let f = random_feature(&mut rng, j.x_alphabet(), 2);
        let fit = logistic_fit(&f, &j, LrBudget::default()).unwrap();
        assert!(fit.converged, "‖∇‖ = {}", fit.grad_norm);
        assert!(logistic_gradient(&f, &j, &fit.model).unwrap().norm() < 1e-8);
    }

    #[test]
    fn separable_data_is_capped() {
        let a = Alphabet::new(["-1", "1"]).unwrap();
        let j =
            JointDistribution::from_rows(a.clone(), a.clone(), &[vec![0.5, 0.0], vec![0.0, 0.5]])
                .unwrap();
        let f = Feature::scalar(a, vec![-1.0, 1.0]).unwrap();
        let fit = logistic_fit(&f, &j, LrBudget::default()).unwrap();
        assert!(fit.capped && !fit.converged);
        assert!((fit.model.w.norm() - WEIGHT_CAP).abs() < 1e-9);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
