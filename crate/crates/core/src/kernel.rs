//! Kernels on a finite alphabet as Gram tables.
//!
//! Besides validation this module covers the centered kernel `𝓀̃`, the
//! associated operator `[τ(f)](x) = E[𝓀(X,x) f(X)]`, projection kernels of
//! feature subspaces (whose operator is the orthogonal projection onto the
//! subspace), the maximal correlation kernel, explicit feature maps, and the
//! kernelized discriminative model
//! `P^{(𝓀)}(y|x) = P_Y(y) (1 + E[𝓀̃(X,x) | Y = y])`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::{Alphabet, JointDistribution, Marginal};
use crate::feature::{same_alphabet, Feature, FeatureSubspace, GRAM_CUTOFF};
use crate::linalg::{from_rows, pinv_sym, sym_eigen, to_rows};
use crate::modal::{decompose, f_star_feature, SIGMA_TOL};
use crate::{Error, Result};

/// Entrywise asymmetry allowed in a Gram table.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Negative eigenvalues down to `-PSD_TOL · max(1, λ_max)` are accepted.
pub const PSD_TOL: f64 = 1e-8;
/// Default relative eigenvalue cutoff for [`feature_map`].
pub const FEATURE_MAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    alphabet: Alphabet,
    gram: DMatrix<f64>,
}

/// On-disk layout: `{ "alphabet": [...], "gram": [[...], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub alphabet: Vec<String>,
    pub gram: Vec<Vec<f64>>,
}

impl Kernel {
    /// Validate symmetry and positive semidefiniteness. The stored table is
    /// the symmetrized input.
    pub fn new(alphabet: Alphabet, gram: DMatrix<f64>) -> Result<Self> {
        let n = alphabet.len();
        if gram.nrows() != n || gram.ncols() != n {
            return Err(Error::invalid(
                "gram",
                format!("expected {n}x{n}, got {}x{}", gram.nrows(), gram.ncols()),
            ));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gram", "non-finite entry"));
        }
        let asym = (&gram - gram.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotAKernel(format!("asymmetric by {asym:e}")));
        }
        let gram = (&gram + gram.transpose()) * 0.5;
        let (vals, _) = sym_eigen(&gram);
        if let (Some(&top), Some(&bottom)) = (vals.first(), vals.last()) {
            if bottom < -PSD_TOL * top.max(1.0) {
                return Err(Error::NotAKernel(format!(
                    "smallest eigenvalue {bottom:e} is negative"
                )));
            }
        }
        Ok(Kernel { alphabet, gram })
    }

    pub fn zeros(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        Kernel {
            alphabet,
            gram: DMatrix::zeros(n, n),
        }
    }

    /// `𝓀(x,x') = ⟨f(x), f(x')⟩`.
    pub fn linear(f: &Feature) -> Self {
        let g = f.values().transpose() * f.values();
        Kernel {
            alphabet: f.alphabet().clone(),
            gram: (&g + g.transpose()) * 0.5,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn at(&self, x: usize, x2: usize) -> f64 {
        self.gram[(x, x2)]
    }

    pub fn to_file(&self) -> KernelFile {
        KernelFile {
            alphabet: self.alphabet.labels().to_vec(),
            gram: to_rows(&self.gram),
        }
    }

    pub fn from_file(file: KernelFile) -> Result<Self> {
        let alphabet = Alphabet::new(file.alphabet)?;
        let n = alphabet.len();
        if file.gram.len() != n {
            return Err(Error::invalid(
                "gram",
                format!("{} rows for {n} symbols", file.gram.len()),
            ));
        }
        Kernel::new(alphabet, from_rows(&file.gram, n, "gram")?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Kernel::from_file(crate::dist::parse_json(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("kernel serializes")
    }
}

/// Mean function `k̄(x) = E[𝓀(X, x)]`.
pub fn kernel_mean(k: &Kernel, px: &Marginal) -> Result<Vec<f64>> {
    same_alphabet(&k.alphabet, px.alphabet())?;
    let n = k.alphabet.len();
    Ok((0..n)
        .map(|x| px.expect((0..n).map(|a| k.gram[(a, x)])))
        .collect())
}

/// Centered kernel `𝓀̃(x,x') = 𝓀(x,x') − k̄(x) − k̄(x') + E[k̄(X)]`.
pub fn center_kernel(k: &Kernel, px: &Marginal) -> Result<Kernel> {
    let kbar = kernel_mean(k, px)?;
    let total = px.expect(kbar.iter().copied());
    let n = k.alphabet.len();
    let g = DMatrix::from_fn(n, n, |a, b| k.gram[(a, b)] - kbar[a] - kbar[b] + total);
    Ok(Kernel {
        alphabet: k.alphabet.clone(),
        gram: (&g + g.transpose()) * 0.5,
    })
}

/// `[τ(f)](x) = Σ_{x'} P_X(x') 𝓀(x', x) f(x')` for a one-dimensional `f`.
pub fn apply_operator(k: &Kernel, f: &Feature, px: &Marginal) -> Result<Feature> {
    if f.dim() != 1 {
        return Err(Error::invalid("feature", "operator acts on 1-dim features"));
    }
    same_alphabet(&k.alphabet, f.alphabet())?;
    same_alphabet(&k.alphabet, px.alphabet())?;
    let n = k.alphabet.len();
    let fv = f.values();
    let out: Vec<f64> = (0..n)
        .map(|x| px.expect((0..n).map(|a| k.gram[(a, x)] * fv[(0, a)])))
        .collect();
    Feature::scalar(k.alphabet.clone(), out)
}

/// Projection kernel `𝓀_G(x,x') = f(x)ᵀ Λ_f⁻¹ f(x')` for the basis `f` of `G`.
pub fn projection_kernel(g: &FeatureSubspace) -> Kernel {
    projection_gram(g.basis(), g.gram())
}

fn projection_gram(basis: &Feature, lambda: &DMatrix<f64>) -> Kernel {
    let inv = pinv_sym(lambda, GRAM_CUTOFF);
    let v = basis.values();
    let m = v.transpose() * inv * v;
    Kernel {
        alphabet: basis.alphabet().clone(),
        gram: (&m + m.transpose()) * 0.5,
    }
}

/// Projection kernel of `span{f}` with `Λ_f` pseudo-inverted, so
/// rank-deficient or zero features are accepted.
pub fn projection_kernel_pinv(f: &Feature, px: &Marginal) -> Result<Kernel> {
    let lambda = crate::feature::second_moment(f, px)?;
    Ok(projection_gram(f, &lambda))
}

/// Maximal correlation kernel `𝓀*(x,x') = ⟨f*(x), f*(x')⟩`.
pub fn maximal_correlation_kernel(joint: &JointDistribution) -> Result<Kernel> {
    let fs = f_star_feature(&decompose(joint, SIGMA_TOL))?;
    Ok(Kernel::linear(&fs))
}

/// Explicit map `ν` with `⟨ν(x), ν(x')⟩ = 𝓀(x,x')` (plain Euclidean product),
/// `νᵢ(x) = √λᵢ vᵢ(x)` over eigenpairs with `λᵢ > tol · λ_max`.
pub fn feature_map(k: &Kernel, tol: f64) -> Result<Feature> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    let (vals, vecs) = sym_eigen(&k.gram);
    let top = vals.first().copied().unwrap_or(0.0);
    if let Some(&bottom) = vals.last() {
        if bottom < -PSD_TOL * top.max(1.0) {
            return Err(Error::NotAKernel(format!("eigenvalue {bottom:e}")));
        }
    }
    let kept: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > 0.0 && vals[i] > tol * top)
        .collect();
    let n = k.alphabet.len();
    let values = DMatrix::from_fn(kept.len(), n, |r, x| {
        vals[kept[r]].sqrt() * vecs[(x, kept[r])]
    });
    Feature::new(k.alphabet.clone(), values)
}

/// Kernelized discriminative model: a generalized conditional table whose
/// rows sum to one but whose entries may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct KdmModel {
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    table: DMatrix<f64>,
}

impl KdmModel {
    /// `|X| × |Y|` table of `P^{(𝓀)}(y|x)`.
    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }

    pub fn y_alphabet(&self) -> &Alphabet {
        &self.y_alphabet
    }
}

/// Build the KDM of `k` on `joint`.
pub fn kdm(k: &Kernel, joint: &JointDistribution) -> Result<KdmModel> {
    let px = joint.px();
    let py = joint.py();
    let kc = center_kernel(k, &px)?;
    let (nx, ny) = (joint.nx(), joint.ny());
    // P_Y(y) E[𝓀̃(X,x) | Y=y] = Σ_{x'} P(x',y) 𝓀̃(x',x)
    let table = DMatrix::from_fn(nx, ny, |x, y| {
        py.probs()[y]
            + (0..nx)
                .map(|a| joint.p(a, y) * kc.gram[(a, x)])
                .sum::<f64>()
    });
    Ok(KdmModel {
        x_alphabet: joint.x_alphabet().clone(),
        y_alphabet: joint.y_alphabet().clone(),
        table,
    })
}

/// `argmax_y P^{(𝓀)}(y|x)` for each `x`, as y-indices; ties go to the
/// earliest label.
pub fn kdm_predict(model: &KdmModel) -> Vec<usize> {
    (0..model.table.nrows())
        .map(|x| argmax_first(model.table.row(x).iter().copied()))
        .collect()
}

pub(crate) fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::{center, project};
    use crate::rng::{random_feature, seeded_random_joint, SplitMix64};

    fn weights(p: &[f64]) -> Marginal {
        Marginal::new(Alphabet::indexed(p.len()).unwrap(), p.to_vec()).unwrap()
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let a = Alphabet::indexed(2).unwrap();
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            Kernel::new(a.clone(), asym),
            Err(Error::NotAKernel(_))
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(Kernel::new(a, indef), Err(Error::NotAKernel(_))));
    }

    #[test]
    fn centering_constant_kernel_gives_zero() {
        let px = weights(&[0.2, 0.3, 0.5]);
        let k = Kernel::new(px.alphabet().clone(), DMatrix::from_element(3, 3, 2.5)).unwrap();
        assert!(center_kernel(&k, &px).unwrap().gram().amax() < 1e-15);
    }

    #[test]
    fn centering_already_centered_map_is_noop() {
        let mut rng = SplitMix64::new(1);
        let px = weights(&[0.1, 0.2, 0.3, 0.4]);
        let f = center(&random_feature(&mut rng, px.alphabet(), 2), &px).unwrap();
        let k = Kernel::linear(&f);
        let kc = center_kernel(&k, &px).unwrap();
        assert!((kc.gram() - k.gram()).amax() < 1e-10);
    }

    #[test]
    fn centered_projection_kernel_matches_centered_feature_map() {
        let mut rng = SplitMix64::new(21);
        let px = weights(&[0.1, 0.15, 0.2, 0.25, 0.3]);
        let basis = random_feature(&mut rng, px.alphabet(), 2);
        let k = projection_kernel(&FeatureSubspace::new(basis, &px).unwrap());
        let nu = feature_map(&k, FEATURE_MAP_TOL).unwrap();
        let nu_c = center(&nu, &px).unwrap();
        let expected = nu_c.values().transpose() * nu_c.values();
        let kc = center_kernel(&k, &px).unwrap();
        assert!((kc.gram() - expected).amax() < 1e-10);
    }

    #[test]
    fn full_space_kernel_is_identity_operator() {
        let px = weights(&[0.1, 0.2, 0.3, 0.4]);
        let g = FeatureSubspace::new(Feature::indicators(px.alphabet().clone()), &px).unwrap();
        let k = projection_kernel(&g);
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 1.0 / px.probs()[a] } else { 0.0 };
                assert!((k.at(a, b) - expected).abs() < 1e-10);
            }
        }
        let f = Feature::scalar(px.alphabet().clone(), vec![3.0, -1.0, 0.5, 2.0]).unwrap();
        let tf = apply_operator(&k, &f, &px).unwrap();
        assert!((tf.values() - f.values()).amax() < 1e-10);
        let z = apply_operator(&Kernel::zeros(px.alphabet().clone()), &f, &px).unwrap();
        assert_eq!(z.values().amax(), 0.0);
    }

    #[test]
    fn operator_of_projection_kernel_projects() {
        let mut rng = SplitMix64::new(8);
        let px = weights(&[0.05, 0.15, 0.2, 0.25, 0.35]);
        let g = FeatureSubspace::new(random_feature(&mut rng, px.alphabet(), 2), &px).unwrap();
        let f = random_feature(&mut rng, px.alphabet(), 1);
        let tf = apply_operator(&projection_kernel(&g), &f, &px).unwrap();
        let pf = project(&f, &g).unwrap();
        assert!((tf.values() - pf.values()).amax() < 1e-9);
    }

    #[test]
    fn projection_kernel_is_basis_independent() {
        let mut rng = SplitMix64::new(17);
        let px = weights(&[0.1, 0.2, 0.2, 0.2, 0.3]);
        let basis = random_feature(&mut rng, px.alphabet(), 3);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.range(-1.0, 1.0)) + DMatrix::identity(3, 3) * 2.0;
        let other = basis.transform(&a).unwrap();
        let k1 = projection_kernel(&FeatureSubspace::new(basis, &px).unwrap());
        let k2 = projection_kernel(&FeatureSubspace::new(other, &px).unwrap());
        assert!((k1.gram() - k2.gram()).amax() < 1e-9);
    }

    #[test]
    fn orthonormal_basis_kernel_is_inner_product() {
        let j = seeded_random_joint(6, 5, 4).unwrap();
        let fs = f_star_feature(&decompose(&j, SIGMA_TOL)).unwrap();
        let g = FeatureSubspace::new(fs.clone(), &j.px()).unwrap();
        let k = projection_kernel(&g);
        assert!((k.gram() - Kernel::linear(&fs).gram()).amax() < 1e-9);
    }

    #[test]
    fn maximal_correlation_kernel_binary() {
        let a = Alphabet::new(["-1", "1"]).unwrap();
        let j =
            JointDistribution::from_rows(a.clone(), a, &[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let k = maximal_correlation_kernel(&j).unwrap();
        assert!((k.gram() - &expected).amax() < 1e-12);
        let bsc = JointDistribution::binary_symmetric(0.1).unwrap();
        let k = maximal_correlation_kernel(&bsc).unwrap();
        assert!((k.gram() - &expected).amax() < 1e-12);
    }

    #[test]
    fn independent_has_no_maximal_correlation_kernel() {
        let px = weights(&[0.4, 0.6]);
        let j = JointDistribution::product(&px, &px).unwrap();
        assert!(matches!(
            maximal_correlation_kernel(&j),
            Err(Error::EmptyFeature(_))
        ));
    }

    #[test]
    fn feature_map_cases() {
        let a = Alphabet::indexed(3).unwrap();
        let g = Feature::scalar(a.clone(), vec![1.0, -2.0, 0.5]).unwrap();
        let nu = feature_map(&Kernel::linear(&g), FEATURE_MAP_TOL).unwrap();
        assert_eq!(nu.dim(), 1);
        let same = (nu.values() - g.values()).amax() < 1e-12;
        let flipped = (nu.values() + g.values()).amax() < 1e-12;
        assert!(same || flipped);

        let z = feature_map(&Kernel::zeros(a.clone()), FEATURE_MAP_TOL).unwrap();
        assert_eq!(z.dim(), 0);
        assert_eq!(Kernel::linear(&z).gram(), &DMatrix::zeros(3, 3));

        let mut rng = SplitMix64::new(30);
        let f = random_feature(&mut rng, &Alphabet::indexed(6).unwrap(), 4);
        let k = Kernel::linear(&f);
        let nu = feature_map(&k, FEATURE_MAP_TOL).unwrap();
        assert_eq!(nu.dim(), 4);
        assert!((Kernel::linear(&nu).gram() - k.gram()).amax() < 1e-9);
    }

    #[test]
    fn kdm_of_zero_kernel_is_prior() {
        let j = seeded_random_joint(2, 4, 3).unwrap();
        let m = kdm(&Kernel::zeros(j.x_alphabet().clone()), &j).unwrap();
        let py = j.py();
        for x in 0..4 {
            for y in 0..3 {
                assert!((m.table()[(x, y)] - py.probs()[y]).abs() < 1e-15);
            }
        }
        let best = argmax_first(py.probs().iter().copied());
        assert!(kdm_predict(&m).iter().all(|&y| y == best));
    }

    #[test]
    fn kdm_of_maximal_correlation_kernel_is_posterior() {
        let j = seeded_random_joint(12, 6, 4).unwrap();
        let m = kdm(&maximal_correlation_kernel(&j).unwrap(), &j).unwrap();
        let post = j.conditional_y_given_x().unwrap();
        assert!((m.table() - post).amax() < 1e-8);
    }

    #[test]
    fn kdm_rows_sum_to_one() {
        let mut rng = SplitMix64::new(44);
        let j = seeded_random_joint(44, 5, 3).unwrap();
        let k = Kernel::linear(&random_feature(&mut rng, j.x_alphabet(), 3).scale(4.0));
        let m = kdm(&k, &j).unwrap();
        for x in 0..5 {
            assert!((m.table().row(x).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_ties_go_first() {
        assert_eq!(argmax_first([0.5, 0.5]), 0);
        assert_eq!(argmax_first([0.2, 0.3, 0.3]), 1);
    }
}
