//! Modal decomposition `P(x,y) = P_X(x) P_Y(y) (1 + Σᵢ σᵢ f*ᵢ(x) g*ᵢ(y))`.
//!
//! Built from the SVD of the centered normalized table
//! `B̃(x,y) = P(x,y)/√(P_X(x)P_Y(y)) − √P_X(x)√P_Y(y)`. Removing the trivial
//! mode before factorizing keeps the constant direction out of the result
//! even when the top singular value of the uncentered matrix is repeated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{Alphabet, JointDistribution};
use crate::feature::Feature;
use crate::linalg::{canonical_sign, from_rows, svd_sym, to_rows};
use crate::{Error, Result};

/// Default threshold below which singular values count as zero.
pub const SIGMA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalDecomposition {
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    sigmas: Vec<f64>,
    f_star: DMatrix<f64>,
    g_star: DMatrix<f64>,
}

/// JSON layout emitted by the `decompose` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    pub sigmas: Vec<f64>,
    pub f_star: Vec<Vec<f64>>,
    pub g_star: Vec<Vec<f64>>,
    pub rho: f64,
}

impl ModalDecomposition {
    /// Number of non-trivial modes `K`.
    pub fn k(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// HGR maximal correlation `ϱ = σ₁`, or 0 when `K = 0`.
    pub fn rho(&self) -> f64 {
        self.sigmas.first().copied().unwrap_or(0.0)
    }

    /// `K × |X|` table of the maximal correlation functions of `X`.
    pub fn f_star(&self) -> &DMatrix<f64> {
        &self.f_star
    }

    /// `K × |Y|` table of the maximal correlation functions of `Y`.
    pub fn g_star(&self) -> &DMatrix<f64> {
        &self.g_star
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }

    pub fn y_alphabet(&self) -> &Alphabet {
        &self.y_alphabet
    }

    /// `½ Σ σᵢ²`.
    pub fn half_energy(&self) -> f64 {
        0.5 * self.sigmas.iter().map(|s| s * s).sum::<f64>()
    }

    /// Re-assemble the joint table from the marginals of `joint` and the modes.
    pub fn reconstruct(&self, joint: &JointDistribution) -> DMatrix<f64> {
        let (px, py) = joint.marginals();
        DMatrix::from_fn(joint.nx(), joint.ny(), |x, y| {
            let dep: f64 = (0..self.k())
                .map(|i| self.sigmas[i] * self.f_star[(i, x)] * self.g_star[(i, y)])
                .sum();
            px.probs()[x] * py.probs()[y] * (1.0 + dep)
        })
    }

    /// Max entrywise error of [`reconstruct`](Self::reconstruct) against `joint`.
    pub fn reconstruction_error(&self, joint: &JointDistribution) -> f64 {
        (self.reconstruct(joint) - joint.table()).amax()
    }

    pub fn to_file(&self) -> DecompositionFile {
        DecompositionFile {
            x_alphabet: self.x_alphabet.labels().to_vec(),
            y_alphabet: self.y_alphabet.labels().to_vec(),
            sigmas: self.sigmas.clone(),
            f_star: to_rows(&self.f_star),
            g_star: to_rows(&self.g_star),
            rho: self.rho(),
        }
    }

    pub fn from_file(file: DecompositionFile) -> Result<Self> {
        let x_alphabet = Alphabet::new(file.x_alphabet)?;
        let y_alphabet = Alphabet::new(file.y_alphabet)?;
        let k = file.sigmas.len();
        if file.f_star.len() != k || file.g_star.len() != k {
            return Err(Error::invalid(
                "f_star",
                "one row per singular value expected",
            ));
        }
        let f_star = from_rows(&file.f_star, x_alphabet.len(), "f_star")?;
        let g_star = from_rows(&file.g_star, y_alphabet.len(), "g_star")?;
        Ok(ModalDecomposition {
            x_alphabet,
            y_alphabet,
            sigmas: file.sigmas,
            f_star,
            g_star,
        })
    }
}

/// Modal decomposition of `joint`, discarding singular values `≤ sigma_tol`.
///
/// Each `f*ᵢ` is sign-normalized so its first entry with magnitude above
/// `1e-9` is positive; `g*ᵢ` follows. Tied singular values yield an arbitrary
/// orthonormal basis of the tied subspace.
pub fn decompose(joint: &JointDistribution, sigma_tol: f64) -> ModalDecomposition {
    let (px, py) = joint.marginals();
    let sx: Vec<f64> = px.probs().iter().map(|p| p.sqrt()).collect();
    let sy: Vec<f64> = py.probs().iter().map(|p| p.sqrt()).collect();
    let b = DMatrix::from_fn(joint.nx(), joint.ny(), |x, y| {
        joint.p(x, y) / (sx[x] * sy[y]) - sx[x] * sy[y]
    });

    let (values, u, v) = svd_sym(&b, sigma_tol);
    let k = values.len();
    let mut sigmas = Vec::with_capacity(k);
    let mut f_star = DMatrix::zeros(k, joint.nx());
    let mut g_star = DMatrix::zeros(k, joint.ny());
    for (i, &sigma) in values.iter().enumerate() {
        let raw = DVector::from_fn(joint.nx(), |x, _| u[(x, i)] / sx[x]);
        let mut f = raw.clone();
        canonical_sign(&mut f);
        let flip = if f == raw { 1.0 } else { -1.0 };
        f_star.set_row(i, &f.transpose());
        for y in 0..joint.ny() {
            g_star[(i, y)] = flip * v[(y, i)] / sy[y];
        }
        sigmas.push(sigma.min(1.0));
    }
    if sigmas.first().is_some_and(|&s| s > 1.0 - 1e-9) {
        log::warn!("maximal correlation is 1: part of X determines Y exactly");
    }

    ModalDecomposition {
        x_alphabet: joint.x_alphabet().clone(),
        y_alphabet: joint.y_alphabet().clone(),
        sigmas,
        f_star,
        g_star,
    }
}

/// HGR maximal correlation of `joint`.
pub fn maximal_correlation(joint: &JointDistribution) -> f64 {
    decompose(joint, SIGMA_TOL).rho()
}

/// The `K`-dimensional feature `f* = (f*₁, …, f*_K)`.
pub fn f_star_feature(dec: &ModalDecomposition) -> Result<Feature> {
    if dec.k() == 0 {
        return Err(Error::EmptyFeature(
            "X and Y are independent: no maximal correlation functions".into(),
        ));
    }
    Feature::new(dec.x_alphabet.clone(), dec.f_star.clone())
}
