use gaplab_core::ground::{gamma, gamma_recursion_check};
use gaplab_core::linalg::{
    apply_local, c, eig_hermitian, kron, orthonormal_span, pivoted_gram_schmidt, random_density, random_hermitian, random_matrix,
    subspace_distance, support_and_pinv, unvec, vec_of, CMatrix, RANK_TOL,
};
use gaplab_core::states::{BoundaryState, DecayFit, EdgeModel, Side, WindowObservable};
use gaplab_core::{build_kappa_example, KrausTuple};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn e1() -> &'static EdgeModel {
    static M: OnceLock<EdgeModel> = OnceLock::new();
    M.get_or_init(|| EdgeModel::new(&build_kappa_example(1, 1, 1, 0.5, 2).unwrap()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hermitian_eigen_reconstructs(seed in any::<u64>(), n in 1usize..7) {
        let h = random_hermitian(&mut rng(seed), n);
        let (vals, vecs) = eig_hermitian(&h).unwrap();
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, vals.iter().map(|&v| c(v))));
        let back = &vecs * d * vecs.adjoint();
        prop_assert!((back - &h).norm() <= 1e-10 * (1.0 + h.norm()));
        prop_assert!((vecs.adjoint() * &vecs - CMatrix::identity(n, n)).norm() < 1e-10);
    }

    #[test]
    fn support_projection_and_pinv(seed in any::<u64>(), n in 2usize..7, r in 1usize..4) {
        let mut g = rng(seed);
        let b = random_matrix(&mut g, n, r.min(n));
        let a = &b * b.adjoint();
        let p = support_and_pinv(&a, RANK_TOL).unwrap();
        prop_assert!((&p.support * &p.support - &p.support).norm() < 1e-10);
        prop_assert!((&p.support * &a - &a).norm() < 1e-9 * (1.0 + a.norm()));
        prop_assert!((&a * &p.pinv * &a - &a).norm() < 1e-8 * (1.0 + a.norm()));
        prop_assert!((&p.sqrt * &p.sqrt - &a).norm() < 1e-9 * (1.0 + a.norm()));
        prop_assert_eq!(p.support.trace().re.round() as usize, r.min(n));
    }

    #[test]
    fn subspace_distance_is_a_metric(seed in any::<u64>(), n in 3usize..8, d in 1usize..3) {
        let mut g = rng(seed);
        let s: Vec<_> = (0..3).map(|_| orthonormal_span(&random_matrix(&mut g, n, d), RANK_TOL)).collect();
        let ab = subspace_distance(&s[0], &s[1]).unwrap();
        let ba = subspace_distance(&s[1], &s[0]).unwrap();
        let bc = subspace_distance(&s[1], &s[2]).unwrap();
        let ac = subspace_distance(&s[0], &s[2]).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10);
        prop_assert!(ac <= ab + bc + 1e-10);
        prop_assert!(subspace_distance(&s[0], &s[0]).unwrap() < 1e-10);
    }

    #[test]
    fn gram_schmidt_is_orthonormal(seed in any::<u64>(), rows in 3usize..10, cols in 1usize..8) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let (q, _) = pivoted_gram_schmidt(&a, None, 1e-10, rows);
        let k = q.ncols();
        prop_assert_eq!(k, rows.min(cols));
        prop_assert!((q.adjoint() * &q - CMatrix::identity(k, k)).norm() < 1e-10);
    }

    #[test]
    fn transfer_matrix_represents_the_map(seed in any::<u64>(), k in 1usize..4, n in 1usize..4) {
        let mut g = rng(seed);
        let v = KrausTuple::new((0..n).map(|_| random_matrix(&mut g, k, k)).collect()).unwrap();
        let x = random_matrix(&mut g, k, k);
        let lhs = vec_of(&v.apply(&x));
        let rhs = v.matrix() * vec_of(&x);
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + x.norm()));
        let y = random_matrix(&mut g, k, k);
        let a = (v.apply(&x).adjoint() * &y).trace();
        let b = (x.adjoint() * v.apply_adjoint(&y)).trace();
        prop_assert!((a - b).norm() < 1e-10 * (1.0 + x.norm() * y.norm()));
        prop_assert!((unvec(&vec_of(&x), k, k) - &x).norm() == 0.0);
    }

    #[test]
    fn gamma_is_similarity_covariant(seed in any::<u64>(), l in 1usize..5) {
        // Γ(X) is unchanged under v ↦ S v S⁻¹, X ↦ S X S⁻¹.
        let mut g = rng(seed);
        let v: Vec<CMatrix> = (0..2).map(|_| random_matrix(&mut g, 2, 2)).collect();
        let s = random_matrix(&mut g, 2, 2) + CMatrix::identity(2, 2) * c(3.0);
        let si = s.clone().try_inverse().unwrap();
        let x = random_matrix(&mut g, 2, 2);
        let conj = |m: &CMatrix| &si.adjoint() * m * s.adjoint();
        let w: Vec<CMatrix> = v.iter().map(conj).collect();
        let a = gamma(&KrausTuple::new(v).unwrap(), l, &x).unwrap();
        let b = gamma(&KrausTuple::new(w).unwrap(), l, &(&s * &x * &si)).unwrap();
        prop_assert!((&a - &b).norm() < 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn gamma_recursions_hold(seed in any::<u64>(), n in 2usize..6) {
        let t = build_kappa_example(1, 1, 1, 0.5, 2).unwrap();
        let r = gamma_recursion_check(&t.kraus(), n, 3, seed).unwrap();
        prop_assert!(r.right_max < 1e-12 && r.left_max < 1e-12);
    }

    #[test]
    fn local_operators_act_on_the_right_sites(seed in any::<u64>(), x in 0usize..3) {
        let mut g = rng(seed);
        let op = random_matrix(&mut g, 2, 2);
        let w = random_matrix(&mut g, 16, 2);
        let full = kron(&kron(&CMatrix::identity(1 << x, 1 << x), &op), &CMatrix::identity(1 << (3 - x), 1 << (3 - x)));
        let got = apply_local(&op, &w, 2, 4, x);
        prop_assert!((got - full * &w).norm() < 1e-12 * (1.0 + w.norm()));
    }

    #[test]
    fn xi_states_are_states(seed in any::<u64>(), l in 1usize..5, left in any::<bool>()) {
        let em = e1();
        let mut g = rng(seed);
        let side = if left { Side::L } else { Side::R };
        let sigma = BoundaryState::random(side, em.boundary_dim(side), &mut g);
        let d = em.xi_density(&sigma, l).unwrap();
        prop_assert!((d.trace().re - 1.0).abs() < 1e-10);
        let vals = gaplab_core::linalg::eigvals_hermitian(&d).unwrap();
        prop_assert!(vals[0] > -1e-12);
        let start = if left { -(l as isize) } else { 0 };
        let a = random_hermitian(&mut g, 1 << l);
        let direct = em.xi_state(&sigma, &WindowObservable::new(start, l, a.clone(), 2).unwrap()).unwrap();
        prop_assert!(((d * a).trace() - direct).norm() < 1e-10);
    }

    #[test]
    fn edge_maps_are_positive(seed in any::<u64>(), l in 1usize..4) {
        let em = e1();
        let mut g = rng(seed);
        let a = random_density(&mut g, 1 << l);
        for (side, start) in [(Side::L, -(l as isize)), (Side::R, 0)] {
            let m = em.edge_map(side, &WindowObservable::new(start, l, a.clone(), 2).unwrap()).unwrap();
            let vals = gaplab_core::linalg::eigvals_hermitian(&m).unwrap();
            prop_assert!(vals[0] > -1e-12);
        }
    }

    #[test]
    fn two_by_two_blocks_stay_psd(seed in any::<u64>()) {
        // [[E(A11), E(A12)], [E(A21), E(A22)]] ⪰ 0 for PSD block inputs.
        let em = e1();
        let mut g = rng(seed);
        let b = random_matrix(&mut g, 8, 3);
        let big = &b * b.adjoint();
        for side in [Side::L, Side::R] {
            let start = if side == Side::L { -2 } else { 0 };
            let mut out = CMatrix::zeros(6, 6);
            for i in 0..2 {
                for j in 0..2 {
                    let blk = big.view((4 * i, 4 * j), (4, 4)).into_owned();
                    let mut m = em.edge_map(side, &WindowObservable::new(start, 2, blk, 2).unwrap()).unwrap();
                    if side == Side::L {
                        m = m.transpose();
                    }
                    out.view_mut((3 * i, 3 * j), (3, 3)).copy_from(&m);
                }
            }
            let vals = gaplab_core::linalg::eigvals_hermitian(&((&out + out.adjoint()) * c(0.5))).unwrap();
            prop_assert!(vals[0] > -1e-10 * (1.0 + big.norm()));
        }
    }

    #[test]
    fn decay_fit_envelope_dominates(seed in any::<u64>(), s in 0.05f64..0.95, len in 4usize..20) {
        use rand::Rng;
        let mut g = rng(seed);
        let series: Vec<(usize, f64)> = (0..len).map(|i| (i, s.powi(i as i32) * g.random_range(0.5..1.5))).collect();
        let f = DecayFit::fit(series, 0);
        prop_assert!(f.skipped.is_none());
        prop_assert!(f.dominated(1e-12));
    }
}
