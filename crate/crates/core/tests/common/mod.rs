//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Exp-sinh nodes and weights for `∫_0^∞`: `x = exp(π/2·sinh t)`.
pub fn exp_sinh_rule(h: f64, t_lo: f64, t_hi: f64) -> Vec<(f64, f64)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    let mut t = t_lo;
    while t <= t_hi + 1e-12 {
        let x = (half_pi * t.sinh()).exp();
        let w = h * half_pi * t.cosh() * x;
        if x.is_finite() && w.is_finite() && x > 0.0 {
            out.push((x, w));
        }
        t += h;
    }
    out
}

/// Sinh-sinh nodes and weights for `∫_{-∞}^{∞}`: `x = sinh(π/2·sinh t)`.
pub fn sinh_sinh_rule(h: f64, t_max: f64) -> Vec<(f64, f64)> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::new();
    let k = (t_max / h).floor() as i64;
    for i in -k..=k {
        let t = i as f64 * h;
        let u = half_pi * t.sinh();
        out.push((u.sinh(), h * half_pi * t.cosh() * u.cosh()));
    }
    out
}

/// `∫_0^∞ f` with exp-sinh (`scale` sets where the mass sits).
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, scale: f64) -> f64 {
    exp_sinh_rule(1.0 / 64.0, -4.5, 3.5)
        .into_iter()
        .map(|(x, w)| w * scale * f(scale * x))
        .sum()
}

/// `∫_{-∞}^{∞} f(c + s·x) s dx` with sinh-sinh.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, centre: f64, scale: f64) -> f64 {
    sinh_sinh_rule(1.0 / 64.0, 3.2)
        .into_iter()
        .map(|(x, w)| w * scale * f(centre + scale * x))
        .sum()
}

/// Central difference with two Richardson steps (error `O(h^6)`), so `h`
/// can be large enough to swamp rounding noise in `f`.
pub fn richardson<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let d = |f: &mut F, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d1 = d(&mut f, h);
    let d2 = d(&mut f, h / 2.0);
    let d3 = d(&mut f, h / 4.0);
    let e1 = (4.0 * d2 - d1) / 3.0;
    let e2 = (4.0 * d3 - d2) / 3.0;
    (16.0 * e2 - e1) / 15.0
}

/// Finite-difference gradient of a function of a vector.
pub fn fd_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let h = 4e-3 * x[k].abs().max(1e-2);
        let mut y = x.to_vec();
        g.push(richardson(
            |v| {
                y[k] = v;
                f(&y)
            },
            x[k],
            h,
        ));
    }
    g
}

/// Draw from the JR density `∝ t^a e^{−bt}`, `t = Σ C_l β_l + η`: the total is
/// `Gamma(a + p + 1, b)` and its split over the `p + 1` terms is uniform on
/// the simplex.
pub fn jr_sample<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, c: &[f64]) -> (Vec<f64>, f64) {
    let p = c.len();
    let t: f64 = Gamma::new(a + p as f64 + 1.0, 1.0 / b).unwrap().sample(rng);
    let e: Vec<f64> = (0..=p).map(|_| -rng.random::<f64>().ln()).collect();
    let s: f64 = e.iter().sum();
    let beta = (0..p).map(|l| t * e[l] / s / c[l]).collect();
    (beta, t * e[p] / s)
}

pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Mean and batch-means standard error.
pub fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let len = v.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| v[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let (m, var) = mean_var(&means);
    (m, (var / batches as f64).sqrt())
}

/// Equispaced 1-d design on `[0, 1]` as rows.
pub fn grid_rows(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect()
}
