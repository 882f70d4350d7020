mod common;

use common::{fd_grad, integrate_half_line, integrate_real_line};
use nalgebra::{DMatrix, DVector};
use robgasp::{
    corr_matrix, CorrelationSpec, DesignMatrix, GaspError, GaspModel, Kernel1D, MeanBasis, RangeParams,
};

fn model(x: &[f64], y: &[f64], nugget: bool) -> GaspModel {
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    GaspModel::new(
        DesignMatrix::from_rows(&rows).unwrap(),
        y.to_vec(),
        MeanBasis::Constant,
        CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap(),
        nugget,
    )
    .unwrap()
}

/// `log ∫∫ N(y; θ 1, σ² R) σ⁻² dθ dσ²` by nested quadrature.
fn log_integrated_lik(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let n = x.len();
    let d = DesignMatrix::from_rows(&x.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
    let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap();
    let r = corr_matrix(&spec, &d, &RangeParams::gamma(vec![gamma]).unwrap()).unwrap();
    let chol = r.clone().cholesky().unwrap();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let yv = DVector::from_column_slice(y);
    let quad = |theta: f64| {
        let e = &yv - DVector::from_element(n, theta);
        e.dot(&chol.solve(&e))
    };
    let mean = y.iter().sum::<f64>() / n as f64;
    let s_ref = quad(mean) / n as f64;
    // Integrand scaled by a constant so the values stay near one.
    let log_shift = -0.5 * n as f64 * (2.0 * std::f64::consts::PI * s_ref).ln() - 0.5 * log_det - s_ref.ln();
    let inner = |s2: f64| {
        integrate_real_line(
            |theta| {
                let lp = -0.5 * n as f64 * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * log_det
                    - 0.5 * quad(theta) / s2
                    - s2.ln();
                (lp - log_shift).exp()
            },
            mean,
            (s2 * n as f64).sqrt() * 0.5,
        )
    };
    integrate_half_line(inner, s_ref).ln() + log_shift
}

#[test]
fn marginal_likelihood_matches_two_dimensional_quadrature() {
    let x = [0.0, 0.3, 0.6, 1.0];
    let y = [0.2, 1.1, 0.7, -0.4];
    let m = model(&x, &y, false);
    let diffs: Vec<f64> = [0.2, 0.5, 1.3]
        .iter()
        .map(|&g| {
            m.log_marginal_lik(&RangeParams::gamma(vec![g]).unwrap(), 0.0).unwrap() - log_integrated_lik(&x, &y, g)
        })
        .collect();
    assert!((diffs[0] - diffs[1]).abs() < 1e-4 && (diffs[1] - diffs[2]).abs() < 1e-4, "{diffs:?}");
}

#[test]
fn likelihood_gradient_matches_differences() {
    let x: Vec<f64> = (0..9).map(|i| (i as f64 / 8.0).powf(1.3)).collect();
    let y: Vec<f64> = x.iter().map(|v| (4.0 * v).cos() + 0.3 * v).collect();
    let m = model(&x, &y, true);
    let u = [0.35, 0.02];
    let g = m
        .log_marginal_lik_grad(&RangeParams::gamma(vec![u[0]]).unwrap(), u[1])
        .unwrap();
    let fd = fd_grad(
        |v| m.log_marginal_lik(&RangeParams::gamma(vec![v[0]]).unwrap(), v[1]).unwrap(),
        &u,
    );
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-5 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn interpolates_at_design_points() {
    let x = [0.0, 0.2, 0.45, 0.7, 1.0];
    let y = [1.0, 0.4, -0.3, 0.8, 2.0];
    let m = model(&x, &y, false);
    let p = RangeParams::gamma(vec![0.3]).unwrap();
    let pd = m.predict(&p, 0.0, &DMatrix::from_column_slice(5, 1, &x)).unwrap();
    for i in 0..5 {
        assert!((pd.mean[i] - y[i]).abs() < 1e-8);
        assert!(pd.scale[i] < 1e-5);
    }
    assert_eq!(pd.dof, 4);
}

#[test]
fn far_field_reverts_to_gls_intercept() {
    let x = [0.0, 0.2, 0.45, 0.7, 1.0];
    let y = [1.0, 0.4, -0.3, 0.8, 2.0];
    let m = model(&x, &y, false);
    let p = RangeParams::gamma(vec![0.05]).unwrap();
    let st = m.state(&p, 0.0).unwrap();
    let pd = m.predict(&p, 0.0, &DMatrix::from_element(1, 1, 50.0)).unwrap();
    assert!((pd.mean[0] - st.theta_hat[0]).abs() < 1e-6);
    assert!(pd.extrapolated[0]);
}

#[test]
fn q_annihilates_the_mean_basis() {
    let x = [0.0, 0.1, 0.5, 0.55, 0.9, 1.0];
    let y = [0.0, 1.0, 0.3, 0.2, -1.0, 0.5];
    let m = model(&x, &y, true);
    let st = m.state(&RangeParams::xi(vec![1.0]).unwrap(), 0.1).unwrap();
    let qh = &st.q_mat * m.basis_matrix();
    assert!(qh.amax() < 1e-10);
    assert!((st.s2 - y.iter().zip(st.qy.iter()).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-12);
}

#[test]
fn invalid_inputs_are_reported() {
    let d = DesignMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
    let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap();
    assert!(matches!(
        GaspModel::new(d.clone(), vec![1.0], MeanBasis::Constant, spec.clone(), false),
        Err(GaspError::Data(_))
    ));
    assert!(GaspModel::new(d.clone(), vec![1.0, f64::NAN], MeanBasis::Constant, spec.clone(), false).is_err());
    // n must exceed q.
    assert!(GaspModel::new(d, vec![1.0, 2.0], MeanBasis::Linear, spec, false).is_err());
    let m = model(&[0.0, 0.5, 1.0], &[2.0, 2.0, 2.0], false);
    assert!(matches!(
        m.log_marginal_lik(&RangeParams::gamma(vec![0.5]).unwrap(), 0.0),
        Err(GaspError::DegenerateOutput(_))
    ));
}

#[test]
fn joint_prediction_agrees_with_marginals() {
    let x = [0.0, 0.25, 0.5, 0.75, 1.0];
    let y = [0.3, 0.9, 0.1, -0.6, 0.4];
    let m = model(&x, &y, false);
    let p = RangeParams::gamma(vec![0.4]).unwrap();
    let new = DMatrix::from_column_slice(3, 1, &[0.1, 0.6, 0.9]);
    let pd = m.predict(&p, 0.0, &new).unwrap();
    let (mean, cov) = m.predict_joint(&p, 0.0, &new).unwrap();
    for i in 0..3 {
        assert!((mean[i] - pd.mean[i]).abs() < 1e-10);
        assert!((cov[(i, i)].sqrt() - pd.scale[i]).abs() < 1e-8);
    }
}
