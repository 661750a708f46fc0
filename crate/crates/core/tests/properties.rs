//! Invariants checked on generated inputs.

use corrkernel::classify::{
    expected_fy, kernel_svm_routes, lambda_threshold, svm_closed_form, svm_loss, svm_solve_generic,
    SolverConfig,
};
use corrkernel::cli::csv_float;
use corrkernel::dist::{Alphabet, JointDistribution, Marginal};
use corrkernel::feature::{center, inner_product, mean, norm, project};
use corrkernel::fisher::{evaluate, score_function, ExponentialTilt, ScoreMethod};
use corrkernel::hscore::{h_score, h_score_max, subspace_h_score_binary};
use corrkernel::kernel::{
    apply_operator, center_kernel, feature_map, kdm, kernel_mean, maximal_correlation_kernel,
    projection_kernel, Kernel, FEATURE_MAP_TOL,
};
use corrkernel::modal::{decompose, f_star_feature, SIGMA_TOL};
use corrkernel::{Feature, FeatureSubspace};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn joint_from(nx: usize, ny: usize, w: &[f64]) -> JointDistribution {
    let total: f64 = w.iter().sum();
    let m = DMatrix::from_fn(nx, ny, |x, y| w[x * ny + y] / total);
    JointDistribution::new(
        Alphabet::indexed(nx).unwrap(),
        Alphabet::indexed(ny).unwrap(),
        m,
    )
    .unwrap()
}

/// A strictly positive joint of size `nx × ny`, `nx, ny ∈ [2, max]`.
fn joint(max: usize) -> impl Strategy<Value = JointDistribution> {
    sized_joint(2..=max, 2..=max)
}

fn sized_joint(
    nx: std::ops::RangeInclusive<usize>,
    ny: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = JointDistribution> {
    (nx, ny).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(0.01f64..1.0, nx * ny).prop_map(move |w| joint_from(nx, ny, &w))
    })
}

/// Balanced `Y ∈ {-1, 1}` joint on `nx ∈ [2, max]` symbols.
fn balanced(max: usize) -> impl Strategy<Value = JointDistribution> {
    (2..=max).prop_flat_map(|nx| {
        prop::collection::vec(0.01f64..1.0, 2 * nx).prop_map(move |w| {
            let (a, b) = w.split_at(nx);
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            let m = DMatrix::from_fn(nx, 2, |x, y| {
                0.5 * if y == 0 { a[x] / sa } else { b[x] / sb }
            });
            JointDistribution::new(
                Alphabet::indexed(nx).unwrap(),
                Alphabet::new(["-1", "1"]).unwrap(),
                m,
            )
            .unwrap()
        })
    })
}

fn feature_on(j: &JointDistribution, dim: usize, v: &[f64]) -> Feature {
    let n = j.nx();
    Feature::new(
        j.x_alphabet().clone(),
        DMatrix::from_fn(dim, n, |i, x| v[i * n + x]),
    )
    .unwrap()
}

/// A joint with a random feature of dimension `1..=3`.
fn joint_and_feature(max: usize) -> impl Strategy<Value = (JointDistribution, Feature)> {
    (joint(max), 1usize..=3).prop_flat_map(|(j, d)| {
        let n = j.nx();
        prop::collection::vec(-1.0f64..1.0, d * n).prop_map(move |v| {
            let f = feature_on(&j, d, &v);
            (j.clone(), f)
        })
    })
}

fn balanced_and_feature(max: usize) -> impl Strategy<Value = (JointDistribution, Feature)> {
    (balanced(max), 1usize..=3).prop_flat_map(|(j, d)| {
        let n = j.nx();
        prop::collection::vec(-1.0f64..1.0, d * n).prop_map(move |v| {
            let f = feature_on(&j, d, &v);
            (j.clone(), f)
        })
    })
}

/// A subspace basis of dimension `1..nx` (well conditioned with high
/// probability; ill-conditioned draws are skipped) plus a scalar feature.
fn subspace_case(
    joints: impl Strategy<Value = JointDistribution>,
) -> impl Strategy<Value = (JointDistribution, Feature, Feature)> {
    joints.prop_flat_map(|j| {
        let n = j.nx();
        (1..n.max(2)).prop_flat_map(move |d| {
            let j = j.clone();
            (
                prop::collection::vec(-1.0f64..1.0, d * n),
                prop::collection::vec(-1.0f64..1.0, n),
            )
                .prop_map(move |(b, f)| (j.clone(), feature_on(&j, d, &b), feature_on(&j, 1, &f)))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_is_a_distribution(j in joint(8)) {
        prop_assert!(j.table().iter().all(|&p| p >= 0.0));
        prop_assert!((j.table().sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn xx_prime_symmetric_with_px_marginals(j in joint(8)) {
        let xx = j.xx_prime();
        let t = xx.table();
        prop_assert!((t - t.transpose()).amax() <= 1e-12);
        let px = j.px();
        for x in 0..j.nx() {
            prop_assert!((t.row(x).sum() - px.probs()[x]).abs() <= 1e-12);
            prop_assert!((t.column(x).sum() - px.probs()[x]).abs() <= 1e-12);
        }
    }

    #[test]
    fn mutual_information_nonnegative_and_zero_on_products(j in joint(8)) {
        prop_assert!(j.mutual_information() >= 0.0);
        let (px, py) = j.marginals();
        let prod = JointDistribution::product(&px, &py).unwrap();
        prop_assert!(prod.mutual_information().abs() < 1e-12);
    }

    #[test]
    fn recounting_samples_is_idempotent(
        pairs in prop::collection::vec((0u8..4, 0u8..3), 1..60)
    ) {
        let labels: Vec<(String, String)> =
            pairs.iter().map(|(x, y)| (x.to_string(), y.to_string())).collect();
        let a = JointDistribution::from_samples(&labels, None, None).unwrap();
        let b = JointDistribution::from_samples(
            &labels,
            Some(a.x_alphabet().clone()),
            Some(a.y_alphabet().clone()),
        )
        .unwrap();
        prop_assert_eq!(a.table(), b.table());
        let n = labels.len() as f64;
        for (x, xl) in a.x_alphabet().labels().iter().enumerate() {
            for (y, yl) in a.y_alphabet().labels().iter().enumerate() {
                let c = labels.iter().filter(|(p, q)| p == xl && q == yl).count() as f64;
                prop_assert!((a.p(x, y) - c / n).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn decomposition_reconstructs_and_is_deterministic(j in joint(16)) {
        let d = decompose(&j, SIGMA_TOL);
        prop_assert!(d.reconstruction_error(&j) < 1e-8);
        prop_assert_eq!(decompose(&j, SIGMA_TOL), d);
    }

    #[test]
    fn f_star_maximizes_h_score((j, f) in joint_and_feature(8)) {
        let d = decompose(&j, SIGMA_TOL);
        let hmax = h_score_max(&j);
        prop_assert!(h_score(&f, &j).unwrap() <= hmax + 1e-8);
        if d.k() > 0 {
            let fs = f_star_feature(&d).unwrap();
            prop_assert!((h_score(&fs, &j).unwrap() - hmax).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_geometry((j, basis, f) in subspace_case(joint(8))) {
        let px = j.px();
        let Ok(g) = FeatureSubspace::new(basis, &px) else { return Ok(()) };
        let p = project(&f, &g).unwrap();
        let pp = project(&p, &g).unwrap();
        prop_assert!((pp.values() - p.values()).amax() < 1e-10);
        let resid = Feature::new(f.alphabet().clone(), f.values() - p.values()).unwrap();
        let (nf, np, nr) = (norm(&f, &px).unwrap(), norm(&p, &px).unwrap(), norm(&resid, &px).unwrap());
        prop_assert!((nf * nf - np * np - nr * nr).abs() < 1e-9);
        prop_assert!(np <= nf + 1e-12);
        // The projection kernel's operator is the projection.
        let tau = apply_operator(&projection_kernel(&g), &f, &px).unwrap();
        prop_assert!((tau.values() - p.values()).amax() < 1e-9);
        // Fixed points: every basis direction is left unchanged.
        for i in 0..g.dim() {
            let gi = g.basis().component(i);
            let t = apply_operator(&projection_kernel(&g), &gi, &px).unwrap();
            prop_assert!((t.values() - gi.values()).amax() < 1e-9);
        }
    }

    #[test]
    fn centering_removes_the_constant((j, f) in joint_and_feature(8)) {
        let px = j.px();
        let ft = center(&f, &px).unwrap();
        prop_assert!(mean(&ft, &px).unwrap().amax() < 1e-12);
        let one = Feature::constant(j.x_alphabet().clone(), 1.0);
        for i in 0..ft.dim() {
            prop_assert!(inner_product(&ft.component(i), &one, &px).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_invariants(
        (j, a) in joint(8).prop_flat_map(|j| {
            let n = j.nx();
            (Just(j), prop::collection::vec(-2.0f64..2.0, n * n))
        })
    ) {
        let n = j.nx();
        let a = DMatrix::from_row_slice(n, n, &a);
        let k = Kernel::new(j.x_alphabet().clone(), &a * a.transpose()).unwrap();
        let nu = feature_map(&k, FEATURE_MAP_TOL).unwrap();
        let back = nu.values().transpose() * nu.values();
        prop_assert!((back - k.gram()).amax() < 1e-9 * k.gram().amax().max(1.0));

        let px = j.px();
        let kc = center_kernel(&k, &px).unwrap();
        prop_assert!(kernel_mean(&kc, &px).unwrap().iter().all(|m| m.abs() < 1e-12 * k.gram().amax().max(1.0)));
        let min_eig = kc.gram().clone().symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-9 * k.gram().amax().max(1.0));

        let model = kdm(&k, &j).unwrap();
        for x in 0..n {
            prop_assert!((model.table().row(x).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn principal_angle_is_a_cosine((jb, basis, _f) in subspace_case(sized_joint(2..=8, 2..=2))) {
        let Ok(g) = FeatureSubspace::new(basis, &jb.px()) else { return Ok(()) };
        let hmax = h_score_max(&jb);
        prop_assume!(hmax > 1e-12);
        let c = subspace_h_score_binary(&g, &jb).unwrap() / hmax;
        prop_assert!((-1e-12..=1.0 + 1e-9).contains(&c));
    }

    #[test]
    fn kernel_svm_routes_agree(j in balanced(8)) {
        let Ok(k) = maximal_correlation_kernel(&j) else { return Ok(()) };
        let r = kernel_svm_routes(&k, &j).unwrap();
        for x in r.decided(1e-9) {
            prop_assert_eq!(r.operator[x], r.expectation[x]);
            prop_assert_eq!(r.kdm[x], r.expectation[x]);
        }
    }

    #[test]
    fn closed_form_loss_formula((j, f) in balanced_and_feature(6), m in 1.0f64..4.0) {
        let lt = lambda_threshold(&f, &j).unwrap();
        let lambda = lt * m + 1e-6;
        let model = svm_closed_form(&f, &j, lambda).unwrap();
        let loss = svm_loss(&f, &j, &model).unwrap();
        let formula = 1.0 - expected_fy(&f, &j).unwrap().norm_squared() / (2.0 * lambda);
        prop_assert!((loss - formula).abs() < 1e-10);
    }

    #[test]
    fn score_is_centered(
        (n, m) in (3usize..7, 1usize..3),
        seed in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let w: Vec<f64> = (0..n).map(|i| 0.2 + seed[i].abs()).collect();
        let total: f64 = w.iter().sum();
        let base = Marginal::new(Alphabet::indexed(n).unwrap(), w.iter().map(|v| v / total).collect()).unwrap();
        let stats = DMatrix::from_fn(m, n, |i, x| seed[10 + i * n + x]);
        let fam = ExponentialTilt::new(base, stats).unwrap();
        let theta = DVector::from_fn(m, |i, _| seed[30 + i]);
        let s = score_function(&fam, &theta, ScoreMethod::Analytic).unwrap();
        let pi = Marginal::new(fam.base().alphabet().clone(), evaluate(&fam, &theta).unwrap()).unwrap();
        prop_assert!(mean(&s.feature, &pi).unwrap().amax() < 1e-12);
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(csv_float(v).parse::<f64>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generic_solver_respects_sandwich((j, f) in balanced_and_feature(5), m in 0.05f64..3.0) {
        let lt = lambda_threshold(&f, &j).unwrap();
        prop_assume!(lt > 1e-6);
        let lambda = lt * m;
        let rep = svm_solve_generic(&f, &j, lambda, &SolverConfig { iterations: 20_000, ..SolverConfig::default() }).unwrap();
        let lower = 1.0 - expected_fy(&f, &j).unwrap().norm_squared() / (2.0 * lambda);
        let upper = lower + (lt / lambda - 1.0).max(0.0);
        prop_assert!(lower <= rep.loss + 1e-6 && rep.loss <= upper + 1e-6);
        if lambda >= lt {
            prop_assert!((rep.loss - lower).abs() < 1e-6);
        }
    }
}
