use proptest::prelude::*;

use opinf_core::linalg::{
    compress_quadratic, compress_quadratic_operator, expand_quadratic_operator, kron_columnwise, min_norm_lstsq, quad_dim,
    quadratic_features, quadratic_vector, spd_factor, truncated_svd, DenseMatrix, Tolerance, Vector,
};
use opinf_core::model::{random_demo, SplitMix64};
use opinf_core::opinf::{infer_velocity_model, l_curve_scan, log_spaced, pick_tolerance, LCurvePoint, RegressorFlags};
use opinf_core::pod::pod_basis;
use opinf_core::transform::LerayProjector;

fn matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    SplitMix64::new(seed).normal_matrix(rows, cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_compress_matches_compact_features(r in 1usize..6, k in 1usize..5, seed in any::<u64>()) {
        let x = matrix(r, k, seed);
        let via_kron = compress_quadratic(&kron_columnwise(&x).unwrap()).unwrap();
        prop_assert_eq!(via_kron, quadratic_features(&x));
    }

    #[test]
    fn expanded_operator_acts_like_compact(r in 1usize..6, q in 1usize..4, seed in any::<u64>()) {
        let h = matrix(q, quad_dim(r), seed);
        let x = Vector::from_column_slice(matrix(r, 1, seed ^ 1).as_slice());
        let full = expand_quadratic_operator(&h).unwrap();
        let kron = kron_columnwise(&DenseMatrix::from_column_slice(r, 1, x.as_slice())).unwrap();
        let lhs = &full * kron;
        let rhs = &h * quadratic_vector(&x);
        prop_assert!((lhs.column(0) - rhs).norm() <= 1e-12 * (1.0 + h.norm() * x.norm_squared()));
        let back = compress_quadratic_operator(&full).unwrap();
        prop_assert!((back - &h).norm() <= 1e-14 * (1.0 + h.norm()));
    }

    #[test]
    fn lstsq_satisfies_normal_equations(rows in 1usize..8, extra in 0usize..10, q in 1usize..4, seed in any::<u64>()) {
        let d = matrix(rows, rows + extra, seed);
        let rhs = matrix(q, rows + extra, seed ^ 7);
        let x = min_norm_lstsq(&d, &rhs, 0.0).unwrap();
        // (X D − RHS) Dᵀ = 0
        let g = (&x * &d - &rhs) * d.transpose();
        prop_assert!(g.norm() <= 1e-9 * (1.0 + rhs.norm() * d.norm()));
    }

    #[test]
    fn svd_rank_is_monotone_in_tolerance(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let m = matrix(rows, cols, seed);
        let mut last = usize::MAX;
        for t in [0.0, 1e-8, 1e-3, 0.1, 1.0, 10.0, 1e3] {
            let rank = truncated_svd(&m, t).unwrap().rank;
            prop_assert!(rank <= last);
            last = rank;
        }
        let full = truncated_svd(&m, 0.0).unwrap();
        prop_assert!((full.reconstruct() - &m).norm() <= 1e-12 * (1.0 + m.norm()));
    }

    #[test]
    fn spd_factor_round_trip(n in 1usize..10, seed in any::<u64>()) {
        let g = matrix(n, n, seed);
        let m = g.transpose() * &g + DenseMatrix::identity(n, n);
        let f = spd_factor(&m).unwrap();
        let l = f.l();
        prop_assert!((&l * l.transpose() - &m).norm() <= 1e-12 * m.norm());
        let b = matrix(n, 2, seed ^ 3);
        prop_assert!((&m * f.solve(&b) - &b).norm() <= 1e-10 * (1.0 + b.norm()));
    }

    #[test]
    fn pod_error_identity(n in 2usize..10, k in 2usize..10, seed in any::<u64>()) {
        let s = matrix(n, k, seed);
        let rank = pod_basis(&s, 1, None).unwrap().numerical_rank();
        for r in 1..=rank {
            let b = pod_basis(&s, r, None).unwrap();
            let err = (&s - &b.vectors * (b.vectors.transpose() * &s)).norm_squared();
            let tail: f64 = b.singular_values[r..].iter().map(|x| x * x).sum();
            prop_assert!((err - tail).abs() <= 1e-10 * s.norm_squared());
        }
    }

    #[test]
    fn lcurve_is_monotone(seed in any::<u64>(), rows in 2usize..8) {
        let d = matrix(rows, 30, seed);
        let scaled = DenseMatrix::from_fn(rows, 30, |i, j| d[(i, j)] * 10f64.powi(-(i as i32)));
        let rhs = matrix(2, 30, seed ^ 5);
        let pts = l_curve_scan(&scaled, &rhs, &log_spaced(1e-10, 1e2, 12).unwrap()).unwrap();
        for w in pts.windows(2) {
            prop_assert!(w[1].residual_norm >= w[0].residual_norm * (1.0 - 1e-12));
            prop_assert!(w[1].solution_norm <= w[0].solution_norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn knee_ignores_input_order(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let mut pts: Vec<LCurvePoint> = (0..8)
            .map(|i| LCurvePoint {
                tol: 10f64.powi(i - 10),
                residual_norm: 1.0 + i as f64 + rng.next_f64(),
                solution_norm: 100.0 / (1.0 + i as f64) + rng.next_f64(),
                rank: 0,
            })
            .collect();
        let first = pick_tolerance(&pts).unwrap();
        pts.reverse();
        prop_assert_eq!(pick_tolerance(&pts).unwrap(), first);
        prop_assert!(pts.iter().any(|p| p.tol == first));
    }

    #[test]
    fn inference_is_invariant_to_sample_order(seed in any::<u64>()) {
        let (r, k) = (2, 30);
        let x = matrix(r, k, seed);
        let u = matrix(1, k, seed ^ 9);
        let xdot = matrix(r, k, seed ^ 11);
        let flags = RegressorFlags::quadratic();
        let (a, _) = infer_velocity_model(&x, &xdot, Some(&u), None, flags, Tolerance::Relative(1e-12)).unwrap();
        let perm: Vec<usize> = (0..k).rev().collect();
        let shuffle = |m: &DenseMatrix| DenseMatrix::from_fn(m.nrows(), k, |i, j| m[(i, perm[j])]);
        let (b, _) = infer_velocity_model(&shuffle(&x), &shuffle(&xdot), Some(&shuffle(&u)), None, flags, Tolerance::Relative(1e-12)).unwrap();
        prop_assert!((&a.a - &b.a).norm() <= 1e-9 * (1.0 + a.a.norm()));
        prop_assert!((a.h.unwrap() - b.h.unwrap()).norm() <= 1e-9 * (1.0 + xdot.norm()));
    }
}

#[test]
fn generated_models_validate() {
    for seed in 0..120u64 {
        let nv = 3 + (seed as usize) % 14;
        let np = (seed as usize) % nv.min(4);
        let m = (seed as usize) % 3;
        let model = random_demo(seed, nv, np, m).unwrap();
        let report = model.validate().unwrap();
        assert!(report.e11_spd, "seed {seed}");
        assert_eq!(report.a12_rank, np, "seed {seed}");
        // A11 is negative definite by construction.
        let sym = (&model.a11 + model.a11.transpose()) * 0.5;
        assert!(sym.symmetric_eigenvalues().max() < 0.0, "seed {seed}");
    }
}

#[test]
fn leray_invariants_over_many_models() {
    for seed in 0..60u64 {
        let nv = 4 + (seed as usize) % 20;
        let np = 1 + (seed as usize) % (nv / 2);
        let model = random_demo(seed, nv, np, 1).unwrap();
        let proj = LerayProjector::new(&model).unwrap();
        let x = Vector::from_column_slice(matrix(nv, 1, seed + 1000).as_slice());
        let px = proj.apply(&x).unwrap();
        assert!((proj.apply(&px).unwrap() - &px).norm() <= 1e-10 * x.norm());
        assert!((model.a12.transpose() * &px).norm() <= 1e-10 * model.a12.norm() * x.norm());
        assert!(proj.apply_t_mat(&model.a12).unwrap().norm() <= 1e-10 * model.a12.norm());
        // Πᵀ is the adjoint of Π.
        let y = Vector::from_column_slice(matrix(nv, 1, seed + 2000).as_slice());
        assert!((y.dot(&px) - proj.apply_t(&y).unwrap().dot(&x)).abs() <= 1e-10 * x.norm() * y.norm());
    }
}
