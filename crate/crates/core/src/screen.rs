//! Inert-input screening through normalized inverse range parameters, and
//! Sobol main/total effect indices by Monte Carlo or through an emulator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bench::{benchmark_model, replicate_data, replicate_seed, TestFunction};
use crate::error::{GaspError, Result};
use crate::fit::{fit_mode, FitConfig, FitResult};
use crate::kernels::Parameterization;
use crate::model::GaspModel;
use crate::priors::{jr_default_params, JrContext, JrParams, PriorSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenResult {
    /// Normalized inverse ranges `P_l = C_l β_l / Σ C_i β_i`.
    pub p: Vec<f64>,
    /// `P_l > p0 / p_x`.
    pub selected: Vec<bool>,
    pub p0: f64,
}

/// Shares `C_l β_l / Σ C_i β_i` and the selection at threshold `p0 / p_x`.
pub fn inverse_range_shares(beta: &[f64], c: &[f64], p0: f64) -> Result<ScreenResult> {
    if beta.len() != c.len() {
        return Err(GaspError::DimensionMismatch {
            what: "inverse ranges vs JR scale constants",
            expected: c.len(),
            got: beta.len(),
        });
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(GaspError::Config(format!("threshold p0 must lie in (0, 1], got {p0}")));
    }
    let w: Vec<f64> = c.iter().zip(beta).map(|(c, b)| c * b).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(GaspError::Fit("all fitted inverse ranges are zero; nothing to normalize".into()));
    }
    let p: Vec<f64> = w.iter().map(|v| v / total).collect();
    let cut = p0 / beta.len() as f64;
    Ok(ScreenResult {
        selected: p.iter().map(|v| *v > cut).collect(),
        p,
        p0,
    })
}

/// Normalized inverse ranges of a JR-prior fit in the `β` parameterization.
pub fn normalized_inverse_ranges(fit: &FitResult, jr: &JrParams, p0: f64) -> Result<ScreenResult> {
    if fit.parameterization != Parameterization::Beta {
        return Err(GaspError::Config(format!(
            "screening needs a fit in the beta parameterization, got {}",
            fit.parameterization.name()
        )));
    }
    inverse_range_shares(&fit.beta, &jr.c, p0)
}

/// Fit configuration for screening: JR prior with the emulation defaults,
/// `β` parameterization.
pub fn screening_fit_config(model: &GaspModel) -> Result<(FitConfig, JrParams)> {
    let jr = jr_default_params(model.design(), JrContext::Emulation)?;
    let cfg = FitConfig::new(Parameterization::Beta, PriorSpec::jr(jr.clone(), model.nugget_enabled()));
    Ok((cfg, jr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolEstimator {
    MonteCarlo,
    Emulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    pub s: Vec<f64>,
    pub s_t: Vec<f64>,
    pub estimator: SobolEstimator,
    /// Base sample size `N`; the function is evaluated `N·(p+2)` times.
    pub n_mc: usize,
    /// Jackknife standard errors (Monte Carlo estimator only).
    pub se: Option<Vec<f64>>,
    pub se_t: Option<Vec<f64>>,
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(GaspError::Config("Sobol indices need at least one input".into()));
    }
    if let Some((l, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
        return Err(GaspError::Config(format!("input {} has an empty range", l + 1)));
    }
    Ok(())
}

/// Sample matrices `A`, `B` and the pick-freeze matrices `AB_i` stacked as
/// `[A; B; AB_1; …; AB_p]`.
fn pick_freeze_points(bounds: &[(f64, f64)], n: usize, seed: u64) -> DMatrix<f64> {
    let p = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |l: usize| bounds[l].0 + (bounds[l].1 - bounds[l].0) * rng.random::<f64>();
    let mut a = DMatrix::zeros(n, p);
    let mut b = DMatrix::zeros(n, p);
    for j in 0..n {
        for l in 0..p {
            a[(j, l)] = draw(l);
        }
        for l in 0..p {
            b[(j, l)] = draw(l);
        }
    }
    let mut x = DMatrix::zeros(n * (p + 2), p);
    for j in 0..n {
        for l in 0..p {
            x[(j, l)] = a[(j, l)];
            x[(n + j, l)] = b[(j, l)];
            for i in 0..p {
                x[((2 + i) * n + j, l)] = if l == i { b[(j, l)] } else { a[(j, l)] };
            }
        }
    }
    x
}

/// Saltelli main effects and Jansen total effects from stacked outputs,
/// with delete-one jackknife standard errors.
fn sobol_from_outputs(y: &[f64], n: usize, p: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let fa = &y[..n];
    let fb = &y[n..2 * n];
    let (sum, sumsq) = fa.iter().chain(fb).fold((0.0, 0.0), |(s, q), v| (s + v, q + v * v));
    let var_from = |s: f64, q: f64, m: f64| q / m - (s / m).powi(2);
    let var = var_from(sum, sumsq, 2.0 * n as f64);
    let mut s = Vec::with_capacity(p);
    let mut st = Vec::with_capacity(p);
    let mut se = Vec::with_capacity(p);
    let mut se_t = Vec::with_capacity(p);
    for i in 0..p {
        let fab = &y[(2 + i) * n..(3 + i) * n];
        let main_terms: Vec<f64> = (0..n).map(|j| fb[j] * (fab[j] - fa[j])).collect();
        let tot_terms: Vec<f64> = (0..n).map(|j| 0.5 * (fa[j] - fab[j]).powi(2)).collect();
        let m_sum: f64 = main_terms.iter().sum();
        let t_sum: f64 = tot_terms.iter().sum();
        s.push(m_sum / n as f64 / var);
        st.push(t_sum / n as f64 / var);
        let nm = (n - 1) as f64;
        let mut loo_s = Vec::with_capacity(n);
        let mut loo_t = Vec::with_capacity(n);
        for j in 0..n {
            let v = var_from(
                sum - fa[j] - fb[j],
                sumsq - fa[j] * fa[j] - fb[j] * fb[j],
                2.0 * nm,
            );
            loo_s.push((m_sum - main_terms[j]) / nm / v);
            loo_t.push((t_sum - tot_terms[j]) / nm / v);
        }
        let jk = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / n as f64;
            (nm / n as f64 * v.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
        };
        se.push(jk(&loo_s));
        se_t.push(jk(&loo_t));
    }
    (s, st, se, se_t)
}

/// Monte Carlo Sobol indices of `f` under independent uniform inputs.
pub fn sobol_mc<F>(f: F, bounds: &[(f64, f64)], n_mc: usize, seed: u64) -> Result<SobolIndices>
where
    F: Fn(&[f64]) -> f64,
{
    check_bounds(bounds)?;
    if n_mc < 100 {
        return Err(GaspError::Config(format!("Sobol estimation needs n_mc ≥ 100, got {n_mc}")));
    }
    let p = bounds.len();
    let x = pick_freeze_points(bounds, n_mc, seed);
    let mut y = Vec::with_capacity(x.nrows());
    let mut row = vec![0.0; p];
    for r in 0..x.nrows() {
        for l in 0..p {
            row[l] = x[(r, l)];
        }
        let v = f(&row);
        if !v.is_finite() {
            return Err(GaspError::Data(format!("function returned {v} at input {row:?}")));
        }
        y.push(v);
    }
    let (s, s_t, se, se_t) = sobol_from_outputs(&y, n_mc, p);
    Ok(SobolIndices {
        s,
        s_t,
        estimator: SobolEstimator::MonteCarlo,
        n_mc,
        se: Some(se),
        se_t: Some(se_t),
    })
}

/// Sobol indices of the emulator's predictive mean.
pub fn sobol_emulator(model: &GaspModel, fit: &FitResult, bounds: &[(f64, f64)], n_mc: usize, seed: u64) -> Result<SobolIndices> {
    check_bounds(bounds)?;
    if bounds.len() != model.dim() {
        return Err(GaspError::DimensionMismatch {
            what: "Sobol bounds vs emulator inputs",
            expected: model.dim(),
            got: bounds.len(),
        });
    }
    if n_mc < 100 {
        return Err(GaspError::Config(format!("Sobol estimation needs n_mc ≥ 100, got {n_mc}")));
    }
    let x = pick_freeze_points(bounds, n_mc, seed);
    let y = fit.predict(model, &x)?.mean;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(GaspError::Data(format!(
            "emulator returned {} at input {:?}",
            y[i],
            x.row(i).iter().collect::<Vec<_>>()
        )));
    }
    let (s, s_t, _, _) = sobol_from_outputs(&y, n_mc, bounds.len());
    Ok(SobolIndices {
        s,
        s_t,
        estimator: SobolEstimator::Emulator,
        n_mc,
        se: None,
        se_t: None,
    })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Functional ANOVA variance components on a tensor Gauss–Legendre grid
/// over `[0,1]^p` (uniform inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Anova {
    pub mean: f64,
    pub variance: f64,
    /// `W_i = Var[z_i(x_i)]`.
    pub main: Vec<f64>,
    /// `W_ij = Var[z_ij(x_i, x_j)]` for `i < j`.
    pub pairs: Vec<((usize, usize), f64)>,
}

pub fn functional_anova<F>(f: F, p: usize, nodes: usize) -> Result<Anova>
where
    F: Fn(&[f64]) -> f64,
{
    if p == 0 || p > 4 || nodes < 2 {
        return Err(GaspError::Config("tensor-grid ANOVA supports 1 ≤ p ≤ 4 and at least 2 nodes".into()));
    }
    let (x, w) = gauss_legendre_unit(nodes);
    let total = nodes.pow(p as u32);
    let mut vals = Vec::with_capacity(total);
    let mut idx = vec![0usize; p];
    let mut pt = vec![0.0; p];
    for flat in 0..total {
        let mut r = flat;
        for l in 0..p {
            idx[l] = r % nodes;
            r /= nodes;
            pt[l] = x[idx[l]];
        }
        vals.push(f(&pt));
    }
    let index = |flat: usize, l: usize| (flat / nodes.pow(l as u32)) % nodes;
    let weight = |flat: usize| (0..p).map(|l| w[index(flat, l)]).product::<f64>();
    let mean: f64 = (0..total).map(|k| weight(k) * vals[k]).sum();
    let variance: f64 = (0..total).map(|k| weight(k) * (vals[k] - mean).powi(2)).sum();
    // main effects z_i(x_i) = E[f | x_i] − mean
    let mut cond1 = vec![vec![0.0; nodes]; p];
    for k in 0..total {
        let wk = weight(k);
        for l in 0..p {
            let a = index(k, l);
            cond1[l][a] += wk / w[a] * vals[k];
        }
    }
    let main: Vec<f64> = (0..p)
        .map(|l| (0..nodes).map(|a| w[a] * (cond1[l][a] - mean).powi(2)).sum())
        .collect();
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let mut cond2 = vec![0.0; nodes * nodes];
            for k in 0..total {
                let (a, b) = (index(k, i), index(k, j));
                cond2[a * nodes + b] += weight(k) / (w[a] * w[b]) * vals[k];
            }
            let mut v = 0.0;
            for a in 0..nodes {
                for b in 0..nodes {
                    let z = cond2[a * nodes + b] - cond1[i][a] - cond1[j][b] + mean;
                    v += w[a] * w[b] * z * z;
                }
            }
            pairs.push(((i, j), v));
        }
    }
    Ok(Anova {
        mean,
        variance,
        main,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreeningMethod {
    /// Normalized inverse ranges from a JR-prior `β` fit.
    InverseRange,
    /// Total-effect Sobol indices of the fitted emulator.
    SobolEmulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningReport {
    pub case: TestFunction,
    pub method: ScreeningMethod,
    pub n: usize,
    pub p0: f64,
    pub seed: u64,
    /// Per replicate: the importance index of every input.
    pub indices: Vec<Vec<f64>>,
    /// Fraction of replicates selecting each input (`P_l > p0/p_x` for the
    /// inverse-range method; `S_Tl > p0/p_x · ΣS_T` for the Sobol method).
    pub selection_freq: Vec<f64>,
    /// Fraction of replicates where the smallest signal index exceeds the
    /// largest noise index.
    pub separation: f64,
    pub mean_index: Vec<f64>,
}

impl ScreeningReport {
    /// One row per replicate with the index of every input.
    pub fn to_csv(&self) -> String {
        let p = self.selection_freq.len();
        let mut s = String::from("case,method,n,replicate");
        for l in 1..=p {
            s += &format!(",index_{l}");
        }
        s.push('\n');
        for (r, idx) in self.indices.iter().enumerate() {
            s += &format!("{},{:?},{},{}", self.case.id(), self.method, self.n, r);
            for v in idx {
                s += &format!(",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    /// Per input: selection frequency and mean index.
    pub fn summary_csv(&self) -> String {
        let signals = self.case.signals();
        let mut s = String::from("input,signal,selection_freq,mean_index\n");
        for l in 0..self.selection_freq.len() {
            s += &format!("{},{},{:?},{:?}\n", l + 1, signals.contains(&l), self.selection_freq[l], self.mean_index[l]);
        }
        s += &format!("separation,,{:?},\n", self.separation);
        s
    }
}

fn replicate_indices(f: TestFunction, n: usize, method: ScreeningMethod, seed: u64) -> Result<Vec<f64>> {
    let (design, y) = replicate_data(f, n, seed)?;
    let model = benchmark_model(f, design, y)?;
    match method {
        ScreeningMethod::InverseRange => {
            let (cfg, jr) = screening_fit_config(&model)?;
            let fit = fit_mode(&model, &cfg)?;
            Ok(normalized_inverse_ranges(&fit, &jr, 1.0)?.p)
        }
        ScreeningMethod::SobolEmulator => {
            let cfg = FitConfig::jr_default(&model)?;
            let fit = fit_mode(&model, &cfg)?;
            Ok(sobol_emulator(&model, &fit, &f.bounds(), 2000, seed ^ 0x50B0)?.s_t)
        }
    }
}

/// Repeats the screening protocol on fresh maximin designs.
pub fn screening_benchmark(
    f: TestFunction,
    n: usize,
    method: ScreeningMethod,
    n_replicates: usize,
    p0: f64,
    seed: u64,
) -> Result<ScreeningReport> {
    let p = f.dim();
    let indices: Vec<Vec<f64>> = (0..n_replicates)
        .into_par_iter()
        .map(|r| replicate_indices(f, n, method, replicate_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    let signals = f.signals();
    let reps = indices.len().max(1) as f64;
    let mut selection_freq = vec![0.0; p];
    let mut mean_index = vec![0.0; p];
    let mut separated = 0usize;
    for idx in &indices {
        let total: f64 = idx.iter().sum();
        for l in 0..p {
            if idx[l] > p0 / p as f64 * total {
                selection_freq[l] += 1.0 / reps;
            }
            mean_index[l] += idx[l] / reps;
        }
        let min_signal = signals.iter().map(|&l| idx[l]).fold(f64::INFINITY, f64::min);
        let max_noise = (0..p)
            .filter(|l| !signals.contains(l))
            .map(|l| idx[l])
            .fold(f64::NEG_INFINITY, f64::max);
        if min_signal > max_noise {
            separated += 1;
        }
    }
    Ok(ScreeningReport {
        case: f,
        method,
        n,
        p0,
        seed,
        separation: if indices.is_empty() { 0.0 } else { separated as f64 / reps },
        indices,
        selection_freq,
        mean_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_active_share() {
        let r = inverse_range_shares(&[2.0, 0.0, 0.0], &[1.0; 3], 1.0).unwrap();
        assert_eq!(r.p, vec![1.0, 0.0, 0.0]);
        assert_eq!(r.selected, vec![true, false, false]);
        assert!(matches!(inverse_range_shares(&[0.0; 3], &[1.0; 3], 1.0), Err(GaspError::Fit(_))));
    }

    #[test]
    fn legendre_rule_exact_for_polynomials() {
        let (x, w) = gauss_legendre_unit(5);
        for k in 0..10 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "{k}: {q}");
        }
    }
}
