//! Small dense helpers on top of nalgebra: sorted symmetric eigendecompositions
//! and thresholded pseudo-inverses.

use nalgebra::{DMatrix, DVector};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Each eigenvector is sign-normalized so that its first entry with magnitude
/// above `1e-9` is positive, which makes the output deterministic.
pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        canonical_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Singular triplets of `b` with `σ > tol`, descending, as `(σ, U, V)` with
/// one column of `U`/`V` per triplet.
///
/// Computed from the symmetric eigenproblem of `[[0, B], [Bᵀ, 0]]`, whose
/// eigenvalues are `±σᵢ` with eigenvectors `[uᵢ; ±vᵢ]/√2`. This keeps full
/// absolute accuracy for small `σ` (unlike `BᵀB`) and avoids the
/// bidiagonal SVD, which intermittently returns inaccurate singular vectors
/// for nearly rank-deficient inputs.
pub(crate) fn svd_sym(b: &DMatrix<f64>, tol: f64) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (r, c) = b.shape();
    let mut aug = DMatrix::zeros(r + c, r + c);
    aug.view_mut((0, r), (r, c)).copy_from(b);
    aug.view_mut((r, 0), (c, r)).copy_from(&b.transpose());
    let (values, vectors) = sym_eigen(&aug);
    let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] > tol).collect();
    let mut u = DMatrix::zeros(r, kept.len());
    let mut v = DMatrix::zeros(c, kept.len());
    for (k, &i) in kept.iter().enumerate() {
        let col = vectors.column(i);
        let a = col.rows(0, r).normalize();
        let w = col.rows(r, c).normalize();
        u.set_column(k, &a);
        v.set_column(k, &w);
    }
    (kept.iter().map(|&i| values[i]).collect(), u, v)
}

/// Flip `v` so that its first significant coordinate is positive.
pub(crate) fn canonical_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Eigenvalue cutoff relative to the largest eigenvalue.
fn cutoff(values: &[f64], rel: f64) -> f64 {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    rel * top
}

/// Apply `g` to the retained eigenvalues of a symmetric PSD matrix and
/// reassemble. Eigenvalues at or below `rel * λ_max` map to zero.
fn spectral_map(m: &DMatrix<f64>, rel: f64, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = m.nrows();
    let (values, vectors) = sym_eigen(m);
    let cut = cutoff(&values, rel);
    let mut out = DMatrix::zeros(n, n);
    for (i, &lam) in values.iter().enumerate() {
        if lam > cut && lam > 0.0 {
            let v = vectors.column(i);
            out += g(lam) * v * v.transpose();
        }
    }
    out
}

/// Thresholded Moore-Penrose inverse of a symmetric PSD matrix.
pub(crate) fn pinv_sym(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    spectral_map(m, rel, |l| 1.0 / l)
}

/// Thresholded pseudo-inverse square root of a symmetric PSD matrix.
pub(crate) fn pinv_sqrt_sym(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    spectral_map(m, rel, |l| 1.0 / l.sqrt())
}

/// Eigenvalues above the relative cutoff, descending.
pub(crate) fn positive_spectrum(m: &DMatrix<f64>, rel: f64) -> Vec<f64> {
    let (values, _) = sym_eigen(m);
    let cut = cutoff(&values, rel);
    values.into_iter().filter(|&l| l > cut && l > 0.0).collect()
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Build a matrix from row-major nested vectors; `field` names the input on error.
pub(crate) fn from_rows(
    rows: &[Vec<f64>],
    ncols: usize,
    field: &str,
) -> crate::Result<DMatrix<f64>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(crate::Error::invalid(
                format!("{field}[{i}]"),
                format!("expected {ncols} columns, found {}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(crate::Error::invalid(
                format!("{field}[{i}][{j}]"),
                "non-finite value",
            ));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_svd(b: &DMatrix<f64>) {
        let (s, u, v) = svd_sym(b, 1e-12);
        let recon = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
        assert!((recon - b).amax() < 1e-13);
        let k = s.len();
        assert!((u.transpose() * &u - DMatrix::identity(k, k)).amax() < 1e-13);
        assert!((v.transpose() * &v - DMatrix::identity(k, k)).amax() < 1e-13);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_of_rank_one_tall_matrix() {
        // Outer products: exactly rank one, the case that trips bidiagonal SVD.
        for scale in [0.05, 0.0125, 1e-4] {
            let a = DVector::from_vec(vec![0.48, 0.07, 0.13, 0.098, 0.52, -0.46]);
            let c = DVector::from_vec(vec![-0.7, 0.7]);
            check_svd(&(a * c.transpose() * scale));
        }
    }

    #[test]
    fn svd_of_general_matrices() {
        let mut state = 1u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for (r, c) in [(2, 2), (5, 3), (3, 7), (8, 8)] {
            let b = DMatrix::from_fn(r, c, |_, _| next());
            check_svd(&b);
        }
    }

    #[test]
    fn pinv_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0]));
        let p = pinv_sym(&m, 1e-10);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((p[(1, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(p[(2, 2)], 0.0);
        let s = pinv_sqrt_sym(&m, 1e-10);
        assert!((s[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigen_sorted_and_signed() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] + 1.0).abs() < 1e-12);
        assert!(vecs[(0, 0)] > 0.0 && vecs[(0, 1)] > 0.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = from_rows(&[vec![1.0, 2.0], vec![3.0]], 2, "pxy").unwrap_err();
        assert_eq!(err.field(), Some("pxy[1]"));
    }
}
