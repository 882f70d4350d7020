mod common;

use common::{fd_grad, integrate_half_line, jr_sample, mean_var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robgasp::{
    jr_default_params, jr_log_density, jr_log_density_grad, jr_moments, reference_log_density, CorrelationSpec,
    DesignMatrix, GaspModel, JrContext, JrParams, Kernel1D, MeanBasis, RangeParams,
};

#[test]
fn default_constants_for_unit_square() {
    let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i % 10) as f64 / 9.0, (i / 10) as f64 / 9.0]).collect();
    let d = DesignMatrix::from_rows(&rows).unwrap();
    let cal = jr_default_params(&d, JrContext::Calibration).unwrap();
    assert!((cal.c[0] - 0.1).abs() < 1e-12 && (cal.c[1] - 0.1).abs() < 1e-12);
    assert_eq!((cal.a, cal.b), (-1.5, 1.0));
    assert_eq!(jr_default_params(&d, JrContext::Emulation).unwrap().a, 0.2);
}

#[test]
fn one_dimensional_density_integrates_to_one() {
    for (a, c) in [(0.2, 0.5), (-1.5, 2.0), (1.0, 0.03)] {
        let p = JrParams::new(a, 1.0, vec![c]).unwrap();
        let total = integrate_half_line(
            |beta| integrate_half_line(|eta| jr_log_density(&p, &[beta], Some(eta)).unwrap().exp(), 1.0),
            1.0 / c,
        );
        assert!((total - 1.0).abs() < 1e-6, "a = {a}: {total}");
        let no_nugget = integrate_half_line(|beta| jr_log_density(&p, &[beta], None).unwrap().exp(), 1.0 / c);
        if p.is_proper(false) {
            assert!((no_nugget - 1.0).abs() < 1e-6, "a = {a}: {no_nugget}");
        }
    }
}

#[test]
fn sampled_moments_match_closed_form() {
    let p = JrParams::new(0.2, 1.0, vec![0.3, 1.5]).unwrap();
    let m = jr_moments(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<(Vec<f64>, f64)> = (0..200_000).map(|_| jr_sample(&mut rng, p.a, p.b, &p.c)).collect();
    let n = draws.len() as f64;
    for l in 0..2 {
        let v: Vec<f64> = draws.iter().map(|d| d.0[l]).collect();
        let (mean, var) = mean_var(&v);
        assert!((mean - m.mean_beta[l]).abs() < 4.0 * (var / n).sqrt());
        assert!((var - m.var_beta[l]).abs() < 0.05 * m.var_beta[l]);
    }
    let v: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (mean, _) = mean_var(&v);
    assert!((mean - m.mean_eta).abs() < 4.0 * (m.var_eta / n).sqrt());
}

#[test]
fn improper_prior_has_no_moments() {
    let p = JrParams::new(-2.5, 1.0, vec![1.0]).unwrap();
    assert!(!p.is_proper(true));
    assert!(jr_moments(&p).is_err());
    assert!(JrParams::new(0.2, 0.0, vec![1.0]).is_err());
    assert!(JrParams::new(0.2, 1.0, vec![-1.0]).is_err());
}

#[test]
fn density_gradient_matches_differences() {
    let p = JrParams::new(-0.7, 1.3, vec![0.4, 2.0, 0.9]).unwrap();
    let x = [0.8, 0.1, 1.7, 0.05];
    let g = jr_log_density_grad(&p, &x[..3], Some(x[3])).unwrap();
    let fd = fd_grad(|v| jr_log_density(&p, &v[..3], Some(v[3])).unwrap(), &x);
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() < 1e-7 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn limit_at_zero_total() {
    let pos = JrParams::new(0.2, 1.0, vec![1.0]).unwrap();
    let neg = JrParams::new(-0.5, 1.0, vec![1.0]).unwrap();
    assert_eq!(jr_log_density(&pos, &[0.0], Some(0.0)).unwrap(), f64::NEG_INFINITY);
    assert_eq!(jr_log_density(&neg, &[0.0], Some(0.0)).unwrap(), f64::INFINITY);
    assert!(jr_log_density(&pos, &[-1.0], None).is_err());
}

fn model_on(x: &[f64]) -> GaspModel {
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin() + v).collect();
    GaspModel::new(
        DesignMatrix::from_rows(&rows).unwrap(),
        y,
        MeanBasis::Constant,
        CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap(),
        false,
    )
    .unwrap()
}

#[test]
fn reference_prior_follows_input_rescaling() {
    let x: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
    let (shift, scale) = (-4.0, 6.5);
    let moved: Vec<f64> = x.iter().map(|v| shift + scale * v).collect();
    let a = model_on(&x);
    let b = model_on(&moved);
    for gamma in [0.1, 0.4, 1.5] {
        let la = reference_log_density(&a, &RangeParams::gamma(vec![gamma]).unwrap(), 0.0).unwrap();
        let lb = reference_log_density(&b, &RangeParams::gamma(vec![gamma * scale]).unwrap(), 0.0).unwrap();
        assert!((la - lb - scale.ln()).abs() < 1e-8, "{la} {lb}");
    }
}
