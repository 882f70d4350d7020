//! Limited-memory BFGS with a strong Wolfe line search and simple box bounds
//! (active-set projection). Minimizes; infeasible points report `None`.

/// Relative objective decrease below which the iteration stops.
const FTOL: f64 = 1e-10;

pub(crate) trait Objective {
    fn value(&mut self, x: &[f64]) -> Option<f64>;
    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsSettings {
    pub memory: usize,
    pub max_iter: usize,
    pub gtol: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    /// Infinity norm of the projected gradient (`NaN` when never computed).
    pub pg_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_value: usize,
    pub n_grad: usize,
}

struct Counted<'a, O: Objective> {
    inner: &'a mut O,
    n_value: usize,
    n_grad: usize,
}

impl<O: Objective> Counted<'_, O> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        self.n_value += 1;
        self.inner.value(x).filter(|v| v.is_finite())
    }

    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.n_value += 1;
        self.n_grad += 1;
        self.inner
            .value_grad(x)
            .filter(|(v, g)| v.is_finite() && g.iter().all(|d| d.is_finite()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_grad(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            if (xi <= lo[i] && gi > 0.0) || (xi >= hi[i] && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Runs the optimizer from `x0` (clamped into the box). Returns `None` when
/// the starting point itself is infeasible.
pub(crate) fn minimize<O: Objective>(obj: &mut O, x0: &[f64], s: &LbfgsSettings) -> Option<LbfgsOutcome> {
    let (lo, hi) = (&s.lower, &s.upper);
    let mut x: Vec<f64> = x0.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect();
    let mut c = Counted {
        inner: obj,
        n_value: 0,
        n_grad: 0,
    };
    if s.max_iter == 0 {
        let f = c.value(&x)?;
        return Some(LbfgsOutcome {
            x,
            f,
            pg_norm: f64::NAN,
            iterations: 0,
            converged: false,
            n_value: c.n_value,
            n_grad: c.n_grad,
        });
    }
    let (mut f, mut g) = c.value_grad(&x)?;
    let mut mem_s: Vec<Vec<f64>> = Vec::new();
    let mut mem_y: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut pg = projected_grad(&x, &g, lo, hi);
    while iterations < s.max_iter {
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm < s.gtol {
            converged = true;
            break;
        }
        let free: Vec<bool> = pg.iter().map(|v| *v != 0.0).collect();
        let mut d = two_loop(&pg, &mem_s, &mem_y, &free);
        for i in 0..d.len() {
            if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            mem_s.clear();
            mem_y.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let alpha_max = d
            .iter()
            .enumerate()
            .filter(|(_, di)| **di != 0.0)
            .map(|(i, &di)| if di > 0.0 { (hi[i] - x[i]) / di } else { (lo[i] - x[i]) / di })
            .fold(f64::INFINITY, f64::min);
        if !(alpha_max > 0.0) {
            break;
        }
        let a0 = if mem_s.is_empty() {
            (1.0 / dot(&d, &d).sqrt()).min(1.0)
        } else {
            1.0
        };
        let step = line_search(&mut c, &x, f, &g, &d, a0.min(alpha_max), alpha_max, lo, hi);
        let Some((x_new, f_new, g_new)) = step else {
            if mem_s.is_empty() {
                break;
            }
            mem_s.clear();
            mem_y.clear();
            continue;
        };
        iterations += 1;
        let sv: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > 1e-10 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
            if mem_s.len() == s.memory {
                mem_s.remove(0);
                mem_y.remove(0);
            }
            mem_s.push(sv);
            mem_y.push(yv);
        }
        let df = (f - f_new).abs();
        x = x_new;
        f = f_new;
        g = g_new;
        pg = projected_grad(&x, &g, lo, hi);
        // relative stagnation of the objective also counts as convergence
        if df <= FTOL * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Some(LbfgsOutcome {
        x,
        f,
        pg_norm,
        iterations,
        converged: converged || pg_norm < s.gtol,
        n_value: c.n_value,
        n_grad: c.n_grad,
    })
}

fn two_loop(g: &[f64], ss: &[Vec<f64>], ys: &[Vec<f64>], free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(a, &f)| if f { *a } else { 0.0 }).collect() };
    let mut q = g.to_vec();
    let k = ss.len();
    let mut alpha = vec![0.0; k];
    let ss_m: Vec<Vec<f64>> = ss.iter().map(|v| mask(v)).collect();
    let ys_m: Vec<Vec<f64>> = ys.iter().map(|v| mask(v)).collect();
    let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&ss_m[i], &ys_m[i])).collect();
    for i in (0..k).rev() {
        if !rho[i].is_finite() || rho[i] <= 0.0 {
            continue;
        }
        alpha[i] = rho[i] * dot(&ss_m[i], &q);
        for (qj, yj) in q.iter_mut().zip(&ys_m[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let yy = dot(&ys_m[k - 1], &ys_m[k - 1]);
        let sy = dot(&ss_m[k - 1], &ys_m[k - 1]);
        if yy > 0.0 && sy > 0.0 {
            q.iter_mut().for_each(|v| *v *= sy / yy);
        }
    }
    for i in 0..k {
        if !rho[i].is_finite() || rho[i] <= 0.0 {
            continue;
        }
        let b = rho[i] * dot(&ys_m[i], &q);
        for (qj, sj) in q.iter_mut().zip(&ss_m[i]) {
            *qj += (alpha[i] - b) * sj;
        }
    }
    mask(&q).into_iter().map(|v| -v).collect()
}

type Step = (Vec<f64>, f64, Vec<f64>);

#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective>(
    c: &mut Counted<'_, O>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    a_init: f64,
    a_max: f64,
    lo: &[f64],
    hi: &[f64],
) -> Option<Step> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let dphi0 = dot(g0, d);
    if dphi0 >= 0.0 {
        return None;
    }
    let point = |a: f64| -> Vec<f64> {
        x.iter()
            .zip(d)
            .enumerate()
            .map(|(i, (xi, di))| (xi + a * di).clamp(lo[i], hi[i]))
            .collect()
    };
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = dphi0;
    let mut a = a_init;
    for i in 0..30 {
        let xa = point(a);
        let eval = c.value_grad(&xa);
        let Some((fa, ga)) = eval else {
            return zoom(c, &point, d, f0, dphi0, (a_prev, f_prev, d_prev), (a, f64::INFINITY));
        };
        if fa > f0 + C1 * a * dphi0 || (i > 0 && fa >= f_prev) {
            return zoom(c, &point, d, f0, dphi0, (a_prev, f_prev, d_prev), (a, fa));
        }
        let da = dot(&ga, d);
        if da.abs() <= -C2 * dphi0 {
            return Some((xa, fa, ga));
        }
        if da >= 0.0 {
            return zoom(c, &point, d, f0, dphi0, (a, fa, da), (a_prev, f_prev));
        }
        if a >= a_max {
            return Some((xa, fa, ga));
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a = (2.0 * a).min(a_max);
    }
    None
}

fn zoom<O: Objective>(
    c: &mut Counted<'_, O>,
    point: &dyn Fn(f64) -> Vec<f64>,
    d: &[f64],
    f0: f64,
    dphi0: f64,
    lo: (f64, f64, f64),
    hi: (f64, f64),
) -> Option<Step> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let (mut a_lo, mut f_lo, mut d_lo) = lo;
    let (mut a_hi, mut f_hi) = hi;
    let mut best: Option<Step> = None;
    for _ in 0..12 {
        let width = a_hi - a_lo;
        if width.abs() < 1e-14 * a_lo.abs().max(a_hi.abs()).max(1e-300) {
            break;
        }
        let mut a = a_lo + 0.5 * width;
        if f_hi.is_finite() {
            let denom = 2.0 * (f_hi - f_lo - d_lo * width);
            if denom > 0.0 {
                let cand = a_lo - d_lo * width * width / denom;
                let (l, h) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
                let m = 0.1 * width.abs();
                if cand.is_finite() {
                    a = cand.clamp(l + m, h - m);
                }
            }
        }
        let xa = point(a);
        let Some((fa, ga)) = c.value_grad(&xa) else {
            a_hi = a;
            f_hi = f64::INFINITY;
            continue;
        };
        if fa > f0 + C1 * a * dphi0 || fa >= f_lo {
            a_hi = a;
            f_hi = fa;
        } else {
            let dd = dot(&ga, d);
            if dd.abs() <= -C2 * dphi0 {
                return Some((xa, fa, ga));
            }
            if dd * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
                f_hi = f_lo;
            }
            a_lo = a;
            f_lo = fa;
            d_lo = dd;
            best = Some((xa, fa, ga));
        }
    }
    best
}
