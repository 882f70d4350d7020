use robgasp::bench::{maximin_lhd, TestFunction};
use robgasp::screen::{
    functional_anova, gauss_legendre_unit, inverse_range_shares, normalized_inverse_ranges, screening_fit_config,
    sobol_emulator, sobol_mc,
};
use robgasp::{fit_mode, CorrelationSpec, FitConfig, GaspModel, Kernel1D, MeanBasis};

#[test]
fn additive_function_indices() {
    // f = x1 + 2 x2: variances 1/12 and 4/12, no interaction.
    let s = sobol_mc(|x| x[0] + 2.0 * x[1], &[(0.0, 1.0); 2], 20_000, 3).unwrap();
    let want = [0.2, 0.8];
    for l in 0..2 {
        let se = s.se.as_ref().unwrap()[l];
        assert!((s.s[l] - want[l]).abs() < 4.0 * se + 1e-3, "S{l} = {} ± {se}", s.s[l]);
        assert!((s.s_t[l] - want[l]).abs() < 0.02);
    }
}

#[test]
fn single_active_input() {
    let s = sobol_mc(|x| (3.0 * x[1]).sin(), &[(0.0, 1.0); 3], 5_000, 7).unwrap();
    assert!((s.s[1] - 1.0).abs() < 0.03 && (s.s_t[1] - 1.0).abs() < 0.03);
    for l in [0, 2] {
        assert!(s.s_t[l].abs() < 1e-12, "inert total effect {}", s.s_t[l]);
    }
}

#[test]
fn interaction_shows_up_only_in_total_effects() {
    // f = x1 + x2 + x1 x2: W1 = W2 = 3/16, W12 = 1/144.
    let a = functional_anova(|x| x[0] + x[1] + x[0] * x[1], 2, 8).unwrap();
    assert!((a.main[0] - 0.1875).abs() < 1e-12 && (a.main[1] - 0.1875).abs() < 1e-12);
    assert_eq!(a.pairs.len(), 1);
    assert!((a.pairs[0].1 - 1.0 / 144.0).abs() < 1e-12);
    assert!((a.variance - (0.375 + 1.0 / 144.0)).abs() < 1e-12);
    let s = sobol_mc(|x| x[0] + x[1] + x[0] * x[1], &[(0.0, 1.0); 2], 40_000, 11).unwrap();
    let s_main = 0.1875 / a.variance;
    let s_tot = (0.1875 + 1.0 / 144.0) / a.variance;
    assert!((s.s[0] - s_main).abs() < 0.03 && (s.s_t[0] - s_tot).abs() < 0.01);
}

#[test]
fn gauss_legendre_integrates_polynomials_exactly() {
    let (x, w) = gauss_legendre_unit(5);
    for k in 0..10 {
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
        assert!((v - 1.0 / (k + 1) as f64).abs() < 1e-13, "degree {k}");
    }
}

#[test]
fn emulator_indices_track_the_function() {
    let f = |x: &[f64]| x[0] + 2.0 * x[1];
    let design = maximin_lhd(25, 2, 5, 50).unwrap();
    let y: Vec<f64> = (0..25).map(|i| f(&design.row(i))).collect();
    let m = GaspModel::new(
        design,
        y,
        MeanBasis::Constant,
        CorrelationSpec::uniform(Kernel1D::matern_5_2(), 2).unwrap(),
        false,
    )
    .unwrap();
    let fit = fit_mode(&m, &FitConfig::jr_default(&m).unwrap()).unwrap();
    // Same pick-freeze points: the difference is emulator error only.
    let s = sobol_emulator(&m, &fit, &[(0.0, 1.0); 2], 5_000, 1).unwrap();
    let t = sobol_mc(f, &[(0.0, 1.0); 2], 5_000, 1).unwrap();
    for l in 0..2 {
        assert!((s.s[l] - t.s[l]).abs() < 0.01 && (s.s_t[l] - t.s_t[l]).abs() < 0.01, "{:?} vs {:?}", s, t);
    }
}

#[test]
fn shares_normalize_and_threshold() {
    let r = inverse_range_shares(&[2.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 2.0, 0.5], 1.0).unwrap();
    assert!((r.p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(r.p, vec![2.0 / 4.5, 0.0, 2.0 / 4.5, 0.5 / 4.5]);
    assert_eq!(r.selected, vec![true, false, true, false]);
    assert!(inverse_range_shares(&[0.0, 0.0], &[1.0, 1.0], 1.0).is_err());
    assert!(inverse_range_shares(&[1.0], &[1.0, 1.0], 1.0).is_err());
    assert!(inverse_range_shares(&[1.0], &[1.0], 0.0).is_err());
}

#[test]
fn screening_picks_out_a_single_signal() {
    let f = TestFunction::Ex3I;
    let (design, y) = robgasp::bench::replicate_data(f, 40, 2).unwrap();
    let m = robgasp::bench::benchmark_model(f, design, y).unwrap();
    let (cfg, jr) = screening_fit_config(&m).unwrap();
    let fit = fit_mode(&m, &cfg).unwrap();
    let r = normalized_inverse_ranges(&fit, &jr, 1.0).unwrap();
    assert!((r.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(r.selected[0] && r.selected[1], "{:?}", r.p);
    // a fit in another parameterization is refused
    let xi_fit = fit_mode(&m, &FitConfig::jr_default(&m).unwrap()).unwrap();
    assert!(normalized_inverse_ranges(&xi_fit, &jr, 1.0).is_err());
}
