use nalgebra::DMatrix;
use proptest::prelude::*;
use robgasp::{corr_matrix, CorrelationSpec, DesignMatrix, GaspModel, Kernel1D, MeanBasis, Parameterization, RangeParams};

fn kernel() -> impl Strategy<Value = Kernel1D> {
    prop_oneof![
        Just(Kernel1D::matern_5_2()),
        Just(Kernel1D::matern(1.5).unwrap()),
        Just(Kernel1D::gaussian()),
        (0.5f64..2.0).prop_map(|a| Kernel1D::power_exponential(a).unwrap()),
    ]
}

fn design(max_n: usize, p: usize) -> impl Strategy<Value = DesignMatrix> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, p), 3..max_n)
        .prop_map(|rows| DesignMatrix::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_symmetric_psd_with_unit_diagonal(
        k in kernel(),
        d in design(12, 2),
        g in prop::collection::vec(0.05f64..3.0, 2),
    ) {
        let r = corr_matrix(&CorrelationSpec::uniform(k, 2).unwrap(), &d, &RangeParams::gamma(g).unwrap()).unwrap();
        let n = r.nrows();
        for i in 0..n {
            prop_assert_eq!(r[(i, i)], 1.0);
            for j in 0..n {
                prop_assert_eq!(r[(i, j)], r[(j, i)]);
                prop_assert!(r[(i, j)] >= 0.0 && r[(i, j)] <= 1.0);
            }
        }
        let ev = r.symmetric_eigenvalues();
        prop_assert!(ev.min() > -1e-9 * n as f64, "min eigenvalue {}", ev.min());
    }

    #[test]
    fn kernels_decrease_with_distance(k in kernel(), g in 0.05f64..5.0, d1 in 0.0f64..3.0, d2 in 0.0f64..3.0) {
        let (a, b) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(k.corr(a, g).unwrap() >= k.corr(b, g).unwrap() - 1e-15);
        prop_assert!((k.corr(0.0, g).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parameterizations_round_trip(v in prop::collection::vec(-6.0f64..6.0, 1..5)) {
        let xi = RangeParams::xi(v.clone()).unwrap();
        for to in [Parameterization::Gamma, Parameterization::Beta, Parameterization::Xi] {
            let back = xi.convert(to).unwrap().convert(Parameterization::Xi).unwrap();
            for (a, b) in back.values().iter().zip(&v) {
                prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
            }
        }
        let g = xi.to_gamma();
        let b = xi.to_beta();
        for l in 0..v.len() {
            prop_assert!((g[l] * b[l] - 1.0).abs() < 1e-12);
            prop_assert!((b[l].ln() - v[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_annihilates_the_basis(
        d in design(10, 2),
        lin in any::<bool>(),
        xi in prop::collection::vec(-1.0f64..2.0, 2),
        eta in 1e-4f64..1.0,
    ) {
        let n = d.nrows();
        let basis = if lin { MeanBasis::Linear } else { MeanBasis::Constant };
        prop_assume!(n > basis.q(2) + 1);
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin()).collect();
        let m = GaspModel::new(d, y, basis, CorrelationSpec::uniform(Kernel1D::matern_5_2(), 2).unwrap(), true).unwrap();
        let st = m.state(&RangeParams::xi(xi).unwrap(), eta).unwrap();
        let qh: DMatrix<f64> = &st.q_mat * m.basis_matrix();
        prop_assert!(qh.amax() < 1e-7 * st.q_mat.amax().max(1.0), "{}", qh.amax());
        prop_assert!(st.s2 >= -1e-12);
    }
}
