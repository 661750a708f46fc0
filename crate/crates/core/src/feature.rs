//! Features of `X` as value tables, with the `P_X`-weighted geometry
//! `⟨f₁, f₂⟩ = E[f₁(X) f₂(X)]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::{Alphabet, Marginal};
use crate::linalg::{from_rows, pinv_sym, sym_eigen, to_rows};
use crate::{Error, Result};

/// Relative eigenvalue cutoff used for Gram-matrix pseudo-inverses.
pub const GRAM_CUTOFF: f64 = 1e-10;

/// A `d`-dimensional feature `f: X → ℝ^d`, stored as a `d × |X|` table.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    alphabet: Alphabet,
    values: DMatrix<f64>,
}

/// On-disk layout: `{ "alphabet": [...], "values": [[...], ...] }`, one row per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub alphabet: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Feature {
    pub fn new(alphabet: Alphabet, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != alphabet.len() {
            return Err(Error::invalid(
                "values",
                format!("{} columns for {} symbols", values.ncols(), alphabet.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "non-finite feature value"));
        }
        Ok(Feature { alphabet, values })
    }

    /// One-dimensional feature from its values.
    pub fn scalar(alphabet: Alphabet, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Feature::new(alphabet, DMatrix::from_row_slice(1, n, &values))
    }

    pub fn from_rows(alphabet: Alphabet, rows: &[Vec<f64>]) -> Result<Self> {
        let n = alphabet.len();
        Feature::new(alphabet, from_rows(rows, n, "values")?)
    }

    pub fn zeros(alphabet: Alphabet, dim: usize) -> Self {
        let n = alphabet.len();
        Feature {
            alphabet,
            values: DMatrix::zeros(dim, n),
        }
    }

    pub fn constant(alphabet: Alphabet, c: f64) -> Self {
        let n = alphabet.len();
        Feature {
            alphabet,
            values: DMatrix::from_element(1, n, c),
        }
    }

    /// Indicator features `𝟙{x = a}`, one dimension per symbol.
    pub fn indicators(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        Feature {
            alphabet,
            values: DMatrix::identity(n, n),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `f(x)` for the symbol at index `x`.
    pub fn at(&self, x: usize) -> DVector<f64> {
        self.values.column(x).into_owned()
    }

    /// Values of dimension `i` across the alphabet.
    pub fn component(&self, i: usize) -> Feature {
        Feature {
            alphabet: self.alphabet.clone(),
            values: self.values.rows(i, 1).into_owned(),
        }
    }

    /// Stack the dimensions of two features on the same alphabet.
    pub fn stack(&self, other: &Feature) -> Result<Feature> {
        same_alphabet(&self.alphabet, &other.alphabet)?;
        let mut v = DMatrix::zeros(self.dim() + other.dim(), self.alphabet.len());
        v.rows_mut(0, self.dim()).copy_from(&self.values);
        v.rows_mut(self.dim(), other.dim()).copy_from(&other.values);
        Ok(Feature {
            alphabet: self.alphabet.clone(),
            values: v,
        })
    }

    /// The feature `A f` for a linear map `A` with `dim()` columns.
    pub fn transform(&self, a: &DMatrix<f64>) -> Result<Feature> {
        if a.ncols() != self.dim() {
            return Err(Error::invalid(
                "transform",
                "column count must equal feature dimension",
            ));
        }
        Feature::new(self.alphabet.clone(), a * &self.values)
    }

    pub fn scale(&self, c: f64) -> Feature {
        Feature {
            alphabet: self.alphabet.clone(),
            values: &self.values * c,
        }
    }

    /// Re-index onto `target` by label; every target label must be present.
    pub fn align_to(&self, target: &Alphabet) -> Result<Feature> {
        if &self.alphabet == target {
            return Ok(self.clone());
        }
        let mut v = DMatrix::zeros(self.dim(), target.len());
        for (j, label) in target.labels().iter().enumerate() {
            let src = self.alphabet.index_of(label).ok_or_else(|| {
                Error::AlphabetMismatch(format!("feature has no value for symbol {label:?}"))
            })?;
            v.set_column(j, &self.values.column(src));
        }
        Ok(Feature {
            alphabet: target.clone(),
            values: v,
        })
    }

    pub fn to_file(&self) -> FeatureFile {
        FeatureFile {
            alphabet: self.alphabet.labels().to_vec(),
            values: to_rows(&self.values),
        }
    }

    pub fn from_file(file: FeatureFile) -> Result<Self> {
        Feature::from_rows(Alphabet::new(file.alphabet)?, &file.values)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Feature::from_file(crate::dist::parse_json(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("feature serializes")
    }
}

pub(crate) fn same_alphabet(a: &Alphabet, b: &Alphabet) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::AlphabetMismatch(format!(
            "{:?} vs {:?}",
            a.labels(),
            b.labels()
        )))
    }
}

fn check_scalar(f: &Feature) -> Result<()> {
    if f.dim() == 1 {
        Ok(())
    } else {
        Err(Error::invalid(
            "feature",
            format!("expected 1-dim feature, got {}", f.dim()),
        ))
    }
}

/// `⟨f₁, f₂⟩ = Σ_x P_X(x) f₁(x) f₂(x)` for one-dimensional features.
pub fn inner_product(f1: &Feature, f2: &Feature, px: &Marginal) -> Result<f64> {
    check_scalar(f1)?;
    check_scalar(f2)?;
    same_alphabet(&f1.alphabet, &f2.alphabet)?;
    same_alphabet(&f1.alphabet, px.alphabet())?;
    Ok(px.expect(f1.values.iter().zip(f2.values.iter()).map(|(a, b)| a * b)))
}

pub fn norm(f: &Feature, px: &Marginal) -> Result<f64> {
    Ok(inner_product(f, f, px)?.sqrt())
}

/// `E[f(X)]`, one entry per dimension.
pub fn mean(f: &Feature, px: &Marginal) -> Result<DVector<f64>> {
    same_alphabet(&f.alphabet, px.alphabet())?;
    let p = DVector::from_column_slice(px.probs());
    Ok(&f.values * p)
}

/// `f̃ = f − E[f(X)]`.
pub fn center(f: &Feature, px: &Marginal) -> Result<Feature> {
    let mu = mean(f, px)?;
    let mut v = f.values.clone();
    for mut col in v.column_iter_mut() {
        col -= &mu;
    }
    Ok(Feature {
        alphabet: f.alphabet.clone(),
        values: v,
    })
}

/// `Λ_f = E[f(X) f(X)ᵀ]`.
pub fn second_moment(f: &Feature, px: &Marginal) -> Result<DMatrix<f64>> {
    same_alphabet(&f.alphabet, px.alphabet())?;
    let weighted = DMatrix::from_fn(f.dim(), f.alphabet.len(), |i, x| {
        f.values[(i, x)] * px.probs()[x]
    });
    let m = weighted * f.values.transpose();
    Ok((&m + m.transpose()) * 0.5)
}

/// Whitened copy `Λ_{f̃}^{-1/2} f̃` restricted to the non-degenerate directions
/// of the covariance, so the result has identity second moment.
pub fn whiten(f: &Feature, px: &Marginal) -> Result<Feature> {
    let ft = center(f, px)?;
    let cov = second_moment(&ft, px)?;
    let (vals, vecs) = sym_eigen(&cov);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let kept: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > GRAM_CUTOFF * top && vals[i] > 0.0)
        .collect();
    let a = DMatrix::from_fn(kept.len(), f.dim(), |r, c| {
        vecs[(c, kept[r])] / vals[kept[r]].sqrt()
    });
    ft.transform(&a)
}

/// `span{basis}` inside the feature space, with its weighting `P_X`.
#[derive(Debug, Clone)]
pub struct FeatureSubspace {
    basis: Feature,
    px: Marginal,
    gram: DMatrix<f64>,
}

impl FeatureSubspace {
    /// Rejects bases whose Gram matrix has smallest eigenvalue at or below
    /// `1e-10 ×` the largest.
    pub fn new(basis: Feature, px: &Marginal) -> Result<Self> {
        let gram = second_moment(&basis, px)?;
        if basis.dim() == 0 {
            return Err(Error::IllConditioned("empty basis".into()));
        }
        let (vals, _) = sym_eigen(&gram);
        let top = vals[0];
        let bottom = *vals.last().unwrap();
        if top <= 0.0 || bottom <= GRAM_CUTOFF * top {
            return Err(Error::IllConditioned(format!(
                "Gram eigenvalues range over [{bottom:e}, {top:e}]"
            )));
        }
        Ok(FeatureSubspace {
            basis,
            px: px.clone(),
            gram,
        })
    }

    pub fn basis(&self) -> &Feature {
        &self.basis
    }

    pub fn px(&self) -> &Marginal {
        &self.px
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `Λ` of the basis.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// Orthogonal projection `Π(f | G)` via the normal equations
/// `Λ_g c = E[g(X) f(X)]`.
pub fn project(f: &Feature, g: &FeatureSubspace) -> Result<Feature> {
    check_scalar(f)?;
    same_alphabet(&f.alphabet, &g.basis.alphabet)?;
    let b = &g.basis.values;
    let p = g.px.probs();
    let rhs = DVector::from_fn(b.nrows(), |i, _| {
        (0..p.len())
            .map(|x| p[x] * b[(i, x)] * f.values[(0, x)])
            .sum()
    });
    let coef = pinv_sym(&g.gram, GRAM_CUTOFF) * rhs;
    let values = DMatrix::from_fn(1, b.ncols(), |_, x| b.column(x).dot(&coef));
    Feature::new(f.alphabet.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_feature, SplitMix64};

    fn uniform(n: usize) -> Marginal {
        Marginal::new(Alphabet::indexed(n).unwrap(), vec![1.0 / n as f64; n]).unwrap()
    }

    fn weights(p: &[f64]) -> Marginal {
        Marginal::new(Alphabet::indexed(p.len()).unwrap(), p.to_vec()).unwrap()
    }

    #[test]
    fn constant_inner_product_is_one() {
        let px = weights(&[0.1, 0.2, 0.7]);
        let one = Feature::constant(px.alphabet().clone(), 1.0);
        assert!((inner_product(&one, &one, &px).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_indicators_are_orthogonal() {
        let px = weights(&[0.1, 0.2, 0.7]);
        let a = px.alphabet().clone();
        let e0 = Feature::scalar(a.clone(), vec![1.0, 0.0, 0.0]).unwrap();
        let e2 = Feature::scalar(a, vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(inner_product(&e0, &e2, &px).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_alphabets_rejected() {
        let px = uniform(2);
        let f = Feature::scalar(Alphabet::new(["p", "q"]).unwrap(), vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            inner_product(&f, &f, &px),
            Err(Error::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn centering() {
        let px = uniform(2);
        let f = Feature::scalar(px.alphabet().clone(), vec![1.0, 3.0]).unwrap();
        let c = center(&f, &px).unwrap();
        assert_eq!(c.values().as_slice(), [-1.0, 1.0]);
        let k = center(&Feature::constant(px.alphabet().clone(), 4.2), &px).unwrap();
        assert!(k.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn second_moment_matches_triple_loop() {
        let mut rng = SplitMix64::new(2);
        let px = weights(&[0.1, 0.15, 0.2, 0.25, 0.3]);
        let f = random_feature(&mut rng, px.alphabet(), 3);
        let m = second_moment(&f, &px).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for x in 0..5 {
                    s += px.probs()[x] * f.values()[(i, x)] * f.values()[(j, x)];
                }
                assert!((m[(i, j)] - s).abs() < 1e-12);
            }
        }
        let z = second_moment(&Feature::zeros(px.alphabet().clone(), 2), &px).unwrap();
        assert_eq!(z, DMatrix::zeros(2, 2));
    }

    #[test]
    fn projection_of_member_is_identity() {
        let mut rng = SplitMix64::new(4);
        let px = weights(&[0.1, 0.2, 0.3, 0.4]);
        let basis = random_feature(&mut rng, px.alphabet(), 2);
        let g = FeatureSubspace::new(basis.clone(), &px).unwrap();
        let member = basis
            .transform(&DMatrix::from_row_slice(1, 2, &[0.7, -1.3]))
            .unwrap();
        let p = project(&member, &g).unwrap();
        assert!((p.values() - member.values()).amax() < 1e-10);
    }

    #[test]
    fn projection_of_orthogonal_is_zero() {
        let px = uniform(4);
        let a = px.alphabet().clone();
        let g = FeatureSubspace::new(
            Feature::scalar(a.clone(), vec![1.0, 1.0, 0.0, 0.0]).unwrap(),
            &px,
        )
        .unwrap();
        let f = Feature::scalar(a, vec![1.0, -1.0, 2.0, -2.0]).unwrap();
        assert!(project(&f, &g).unwrap().values().amax() < 1e-15);
    }

    #[test]
    fn projection_onto_unit_feature() {
        // Π(f | span{g}) = ⟨f,g⟩ g when ‖g‖ = 1, checked against the
        // hand-solved 1×1 normal equation.
        let mut rng = SplitMix64::new(9);
        let px = weights(&[0.3, 0.3, 0.2, 0.2]);
        let raw = random_feature(&mut rng, px.alphabet(), 1);
        let g = raw.scale(1.0 / norm(&raw, &px).unwrap());
        let f = random_feature(&mut rng, px.alphabet(), 1);
        let c = inner_product(&f, &g, &px).unwrap();
        let p = project(&f, &FeatureSubspace::new(g.clone(), &px).unwrap()).unwrap();
        for x in 0..4 {
            assert!((p.values()[(0, x)] - c * g.values()[(0, x)]).abs() < 1e-10);
        }
    }

    #[test]
    fn dependent_basis_is_ill_conditioned() {
        let px = uniform(3);
        let a = px.alphabet().clone();
        let b = Feature::from_rows(a, &[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert!(matches!(
            FeatureSubspace::new(b, &px),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let mut rng = SplitMix64::new(13);
        let px = weights(&[0.1, 0.2, 0.3, 0.15, 0.25]);
        let f = random_feature(&mut rng, px.alphabet(), 3);
        let w = whiten(&f, &px).unwrap();
        let cov = second_moment(&center(&w, &px).unwrap(), &px).unwrap();
        assert!((cov - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn align_reorders_by_label() {
        let f =
            Feature::scalar(Alphabet::new(["a", "b", "c"]).unwrap(), vec![1.0, 2.0, 3.0]).unwrap();
        let g = f.align_to(&Alphabet::new(["c", "a"]).unwrap()).unwrap();
        assert_eq!(g.values().as_slice(), [3.0, 1.0]);
        assert!(f.align_to(&Alphabet::new(["z"]).unwrap()).is_err());
    }
}
