//! Marginal posterior mode estimation of the range parameters (and nugget)
//! under either prior, with robustness diagnostics and evaluation accounting.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GaspError, Result};
use crate::kernels::{Parameterization, RangeParams};
use crate::model::{GaspModel, LikelihoodState, PredictiveDistribution};
use crate::optim::{minimize, LbfgsSettings, Objective};
use crate::priors::{jr_default_params, jr_log_density, jr_log_density_grad, log_det_half, JrContext, JrParams, PriorKind, PriorSpec};

/// Off-diagonal threshold for the near-identity / near-ones flags.
pub const ROBUSTNESS_TOL: f64 = 1e-8;
const NUGGET_FLOOR: f64 = 1e-12;
const NUGGET_CEIL: f64 = 1e4;
const NUGGET_STARTS: [f64; 2] = [1e-2, 1e-6];

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub parameterization: Parameterization,
    pub prior: PriorSpec,
    pub max_iter: usize,
    pub tol: f64,
    pub multistart: usize,
    /// Box for the range parameters in the working parameterization;
    /// `None` uses `β_l·w_l ∈ [1e-5, 1e5]` with `w_l` the design width.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Seed for starts beyond the three deterministic ones.
    pub seed: u64,
}

impl FitConfig {
    pub fn new(parameterization: Parameterization, prior: PriorSpec) -> Self {
        Self {
            parameterization,
            prior,
            max_iter: 200,
            tol: 1e-6,
            multistart: 3,
            bounds: None,
            seed: 0,
        }
    }

    /// JR prior with the emulation defaults, `ξ` parameterization.
    pub fn jr_default(model: &GaspModel) -> Result<Self> {
        let jr = jr_default_params(model.design(), JrContext::Emulation)?;
        Ok(Self::new(Parameterization::Xi, PriorSpec::jr(jr, model.nugget_enabled())))
    }

    /// Reference prior, `ξ` parameterization.
    pub fn reference_default(model: &GaspModel) -> Self {
        Self::new(Parameterization::Xi, PriorSpec::reference(model.nugget_enabled()))
    }

    /// Checks the configuration on its own (no model needed).
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.parameterization == Parameterization::Beta {
            match self.prior.kind {
                PriorKind::Reference => {
                    return Err(GaspError::Config(
                        "the reference prior cannot be used with the beta parameterization (its mode is always the all-ones correlation)"
                            .into(),
                    ))
                }
                PriorKind::Jr => {
                    let a = self.prior.jr.as_ref().map(|p| p.a).unwrap_or(0.0);
                    if !(a > 0.0) {
                        return Err(GaspError::Config(format!(
                            "the beta parameterization needs a JR exponent a > 0, got {a}"
                        )));
                    }
                }
            }
        }
        if !(self.tol > 0.0) {
            return Err(GaspError::Config(format!("fit tolerance must be positive, got {}", self.tol)));
        }
        if self.multistart == 0 {
            return Err(GaspError::Config("fit.multistart must be at least 1".into()));
        }
        Ok(())
    }

    fn validate_for(&self, model: &GaspModel) -> Result<()> {
        self.validate()?;
        if self.prior.nugget != model.nugget_enabled() {
            return Err(GaspError::Config(format!(
                "prior nugget setting ({}) differs from the model's ({})",
                self.prior.nugget,
                model.nugget_enabled()
            )));
        }
        if let Some(jr) = &self.prior.jr {
            if jr.dim() != model.dim() {
                return Err(GaspError::DimensionMismatch {
                    what: "JR scale constants vs input dimension",
                    expected: model.dim(),
                    got: jr.dim(),
                });
            }
        }
        if let Some(b) = &self.bounds {
            if b.len() != model.dim() {
                return Err(GaspError::DimensionMismatch {
                    what: "fit bounds",
                    expected: model.dim(),
                    got: b.len(),
                });
            }
            if b.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(GaspError::Config("fit bounds need lower < upper".into()));
            }
        }
        Ok(())
    }
}

/// Definition-of-robustness diagnostics for a fitted correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robustness {
    pub min_offdiag_corr: f64,
    pub max_offdiag_corr: f64,
    pub flag_near_identity: bool,
    pub flag_near_ones: bool,
}

impl Robustness {
    pub fn is_robust(&self) -> bool {
        !self.flag_near_identity && !self.flag_near_ones
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub starts: usize,
    pub best_start: usize,
    pub iterations: usize,
    pub n_objective_evals: usize,
    pub n_gradient_evals: usize,
    pub n_factorizations: usize,
    pub converged: bool,
    /// Infinity norm of the projected gradient at the returned point.
    pub grad_norm: f64,
    /// Coordinates (range then nugget) that ended on a bound.
    pub at_bound: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub parameterization: Parameterization,
    pub gamma: Vec<f64>,
    pub xi: Vec<f64>,
    pub beta: Vec<f64>,
    /// `0` when the nugget is disabled.
    pub eta: f64,
    pub theta_m: Vec<f64>,
    pub sigma2: f64,
    pub log_post: f64,
    pub robustness: Robustness,
    pub trace: FitTrace,
    pub seconds: f64,
}

impl FitResult {
    /// The fitted range parameters in the working parameterization.
    pub fn range_params(&self) -> RangeParams {
        let v = match self.parameterization {
            Parameterization::Gamma => self.gamma.clone(),
            Parameterization::Xi => self.xi.clone(),
            Parameterization::Beta => self.beta.clone(),
        };
        RangeParams::new(v, self.parameterization).expect("fitted parameters are valid")
    }

    pub fn predict(&self, model: &GaspModel, new_inputs: &DMatrix<f64>) -> Result<PredictiveDistribution> {
        model.predict(&self.range_params(), self.eta, new_inputs)
    }

    pub fn state(&self, model: &GaspModel) -> Result<LikelihoodState> {
        model.state(&self.range_params(), self.eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timings {
    pub seconds_total: f64,
    pub n_objective_evals: usize,
    pub n_gradient_evals: usize,
    pub n_factorizations: usize,
}

fn eta_opt(model: &GaspModel, eta: f64) -> Option<f64> {
    model.nugget_enabled().then_some(eta)
}

/// Log-Jacobian of the JR density from `(β, η)` to the working coordinates.
fn jr_jacobian(param: Parameterization, beta: &[f64]) -> f64 {
    match param {
        Parameterization::Beta => 0.0,
        Parameterization::Xi => beta.iter().map(|b| b.ln()).sum(),
        Parameterization::Gamma => 2.0 * beta.iter().map(|b| b.ln()).sum::<f64>(),
    }
}

/// Log prior density of the range parameters (and `η`) in the
/// parameterization of `params`. The reference prior is unnormalized.
pub fn log_prior(model: &GaspModel, prior: &PriorSpec, params: &RangeParams, eta: f64) -> Result<f64> {
    prior.validate()?;
    match prior.kind {
        PriorKind::Jr => {
            let jr = prior.jr.as_ref().expect("validated");
            let beta = params.to_beta();
            Ok(jr_log_density(jr, &beta, eta_opt(model, eta))? + jr_jacobian(params.parameterization(), &beta))
        }
        PriorKind::Reference => crate::priors::reference_log_density(model, params, eta),
    }
}

/// Log marginal posterior (up to a constant) in the parameterization of `params`.
pub fn log_posterior(model: &GaspModel, prior: &PriorSpec, params: &RangeParams, eta: f64) -> Result<f64> {
    Ok(model.log_marginal_lik(params, eta)? + log_prior(model, prior, params, eta)?)
}

/// Gradient of [`log_posterior`] with respect to the range parameters in the
/// parameterization of `params`, then `η` when the nugget is enabled. Fully
/// analytic under the JR prior; the reference prior part uses central
/// differences in `ξ` (and `log η`).
pub fn log_posterior_grad(model: &GaspModel, prior: &PriorSpec, params: &RangeParams, eta: f64) -> Result<Vec<f64>> {
    prior.validate()?;
    let mut g = model.log_marginal_lik_grad(params, eta)?;
    let k = params.len();
    match prior.kind {
        PriorKind::Jr => {
            let jr = prior.jr.as_ref().expect("validated");
            let beta = params.to_beta();
            let gp = jr_log_density_grad(jr, &beta, eta_opt(model, eta))?;
            let pv = params.values();
            for l in 0..k {
                g[l] += match params.parameterization() {
                    Parameterization::Beta => gp[l],
                    Parameterization::Xi => gp[l] * beta[l] + 1.0,
                    Parameterization::Gamma => -gp[l] / (pv[l] * pv[l]) - 2.0 / pv[l],
                };
            }
            if model.nugget_enabled() {
                g[k] += gp[k];
            }
        }
        PriorKind::Reference => {
            let xi = params.to_xi();
            let (gx, geta, _) = reference_grad_xi(model, &xi, eta)?;
            let pv = params.values();
            for l in 0..k {
                g[l] += match params.parameterization() {
                    Parameterization::Xi => gx[l],
                    Parameterization::Gamma => (-gx[l] - 1.0) / pv[l],
                    Parameterization::Beta => (gx[l] - 1.0) / pv[l],
                };
            }
            if let Some(ge) = geta {
                g[k] += ge / eta;
            }
        }
    }
    Ok(g)
}

fn reference_xi(model: &GaspModel, xi: &[f64], eta: f64) -> Result<f64> {
    let p = RangeParams::xi(xi.to_vec())?;
    crate::priors::reference_log_density(model, &p, eta)
}

/// Central differences of the `ξ`-parameterized reference log density; the
/// nugget component is with respect to `log η`. Also returns the number of
/// factorizations spent.
fn reference_grad_xi(model: &GaspModel, xi: &[f64], eta: f64) -> Result<(Vec<f64>, Option<f64>, usize)> {
    let mut gx = Vec::with_capacity(xi.len());
    let mut x = xi.to_vec();
    for l in 0..xi.len() {
        let h = 1e-4 * xi[l].abs().max(1.0);
        x[l] = xi[l] + h;
        let fp = reference_xi(model, &x, eta)?;
        x[l] = xi[l] - h;
        let fm = reference_xi(model, &x, eta)?;
        x[l] = xi[l];
        gx.push((fp - fm) / (2.0 * h));
    }
    let mut count = 2 * xi.len();
    let geta = if model.nugget_enabled() {
        let v = eta.ln();
        let h = 1e-4 * v.abs().max(1.0);
        let fp = reference_xi(model, xi, (v + h).exp())?;
        let fm = reference_xi(model, xi, (v - h).exp())?;
        count += 2;
        Some((fp - fm) / (2.0 * h))
    } else {
        None
    };
    Ok((gx, geta, count))
}

/// Correlation diagnostics for `R` at the given parameters; never fails.
pub fn robustness_check(model: &GaspModel, params: &RangeParams) -> Robustness {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    if let Ok((r, _)) = model.correlation(params, false) {
        let n = r.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = r[(i, j)];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        // a single run or an evaluation failure: nothing to judge
        return Robustness {
            min_offdiag_corr: f64::NAN,
            max_offdiag_corr: f64::NAN,
            flag_near_identity: false,
            flag_near_ones: false,
        };
    }
    Robustness {
        min_offdiag_corr: lo,
        max_offdiag_corr: hi,
        flag_near_identity: hi < ROBUSTNESS_TOL,
        flag_near_ones: lo > 1.0 - ROBUSTNESS_TOL,
    }
}

/// The optimizer's view: coordinates are `log γ` (Gamma) or `log β`
/// (Xi, Beta), followed by `log η`. The function value is the negative log
/// posterior in the working parameterization.
struct PosteriorObjective<'a> {
    model: &'a GaspModel,
    prior: &'a PriorSpec,
    param: Parameterization,
    k: usize,
    factorizations: usize,
    last_error: Option<GaspError>,
}

impl<'a> PosteriorObjective<'a> {
    fn split(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let xi: Vec<f64> = match self.param {
            Parameterization::Gamma => u[..self.k].iter().map(|v| -v).collect(),
            _ => u[..self.k].to_vec(),
        };
        let eta = if self.model.nugget_enabled() { u[self.k].exp() } else { 0.0 };
        (xi, eta)
    }

    fn record<T>(&mut self, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.last_error = Some(e);
                None
            }
        }
    }

    fn eval(&mut self, u: &[f64], grad: bool) -> Result<(f64, Vec<f64>)> {
        let (xi, eta) = self.split(u);
        let params = RangeParams::xi(xi.clone())?;
        let model = self.model;
        let (r, dr) = model.correlation(&params, grad || self.prior.kind == PriorKind::Reference)?;
        self.factorizations += 1;
        let st = model.state_from_corr(r, eta)?;
        let lml = st.log_marginal_lik();
        let (prior_val, mut g) = match self.prior.kind {
            PriorKind::Jr => {
                let jr: &JrParams = self.prior.jr.as_ref().expect("validated");
                let beta: Vec<f64> = xi.iter().map(|v| v.exp()).collect();
                let val = jr_log_density(jr, &beta, eta_opt(model, eta))? + jr_jacobian(self.param, &beta);
                let g = if grad {
                    let gp = jr_log_density_grad(jr, &beta, eta_opt(model, eta))?;
                    // derivatives with respect to ξ_l and log η
                    let jac = match self.param {
                        Parameterization::Beta => 0.0,
                        Parameterization::Xi => 1.0,
                        Parameterization::Gamma => 2.0,
                    };
                    let mut g: Vec<f64> = (0..self.k).map(|l| gp[l] * beta[l] + jac).collect();
                    if model.nugget_enabled() {
                        g.push(gp[self.k] * eta);
                    }
                    g
                } else {
                    Vec::new()
                };
                (val, g)
            }
            PriorKind::Reference => {
                let info = st.fisher_info(&dr, model.nugget_enabled());
                let jac = if self.param == Parameterization::Gamma { xi.iter().sum() } else { 0.0 };
                let val = log_det_half(&info)? + jac;
                let g = if grad {
                    let (gx, geta, count) = reference_grad_xi(model, &xi, eta)?;
                    self.factorizations += count;
                    let jac_d = if self.param == Parameterization::Gamma { 1.0 } else { 0.0 };
                    let mut g: Vec<f64> = gx.iter().map(|v| v + jac_d).collect();
                    if let Some(ge) = geta {
                        g.push(ge);
                    }
                    g
                } else {
                    Vec::new()
                };
                (val, g)
            }
        };
        if !grad {
            return Ok((-(lml + prior_val), Vec::new()));
        }
        let gl = st.grad(&dr, model.nugget_enabled());
        for l in 0..self.k {
            g[l] += gl[l];
        }
        if model.nugget_enabled() {
            g[self.k] += gl[self.k] * eta;
        }
        // to minimization in the search coordinates
        for l in 0..self.k {
            g[l] = if self.param == Parameterization::Gamma { g[l] } else { -g[l] };
        }
        if model.nugget_enabled() {
            g[self.k] = -g[self.k];
        }
        Ok((-(lml + prior_val), g))
    }
}

impl Objective for PosteriorObjective<'_> {
    fn value(&mut self, u: &[f64]) -> Option<f64> {
        let r = self.eval(u, false).map(|(f, _)| f);
        self.record(r)
    }

    fn value_grad(&mut self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let r = self.eval(u, true);
        self.record(r)
    }
}

/// Search-coordinate box and the deterministic starts.
fn search_box(model: &GaspModel, cfg: &FitConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = model.dim();
    let widths: Vec<f64> = model
        .design()
        .bounds()
        .iter()
        .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
        .collect();
    let mut lower = Vec::with_capacity(k + 1);
    let mut upper = Vec::with_capacity(k + 1);
    for l in 0..k {
        // bounds on ξ_l first
        let (xlo, xhi) = match &cfg.bounds {
            None => ((1e-5 / widths[l]).ln(), (1e5 / widths[l]).ln()),
            Some(b) => {
                let (lo, hi) = b[l];
                match cfg.parameterization {
                    Parameterization::Xi => (lo, hi),
                    Parameterization::Beta => (lo.ln(), hi.ln()),
                    Parameterization::Gamma => (-hi.ln(), -lo.ln()),
                }
            }
        };
        if xlo.is_nan() || xhi.is_nan() {
            return Err(GaspError::Config("invalid fit bounds".into()));
        }
        if cfg.parameterization == Parameterization::Gamma {
            lower.push(-xhi);
            upper.push(-xlo);
        } else {
            lower.push(xlo);
            upper.push(xhi);
        }
    }
    if model.nugget_enabled() {
        lower.push(NUGGET_FLOOR.ln());
        upper.push(NUGGET_CEIL.ln());
    }
    Ok((lower, upper))
}

fn starts(model: &GaspModel, cfg: &FitConfig, lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let k = model.dim();
    let scale: Vec<f64> = match &cfg.prior.jr {
        Some(jr) => jr.c.clone(),
        None => {
            let n = model.n() as f64;
            model
                .design()
                .bounds()
                .iter()
                .map(|(lo, hi)| n.powf(-1.0 / k as f64) * if hi > lo { hi - lo } else { 1.0 })
                .collect()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.multistart);
    for s in 0..cfg.multistart {
        let mut u = Vec::with_capacity(lower.len());
        for l in 0..k {
            let beta0: f64 = match s {
                0 => 1.0 / scale[l],
                1 => 0.1 / scale[l],
                2 => 10.0 / scale[l],
                _ => 10f64.powf(rng.random_range(-1.0..1.0)) / scale[l],
            };
            let xi = beta0.ln();
            u.push(if cfg.parameterization == Parameterization::Gamma { -xi } else { xi });
        }
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(lower[i], upper[i]);
        }
        if model.nugget_enabled() {
            // noisy and near-interpolating modes both get a start
            for eta0 in NUGGET_STARTS {
                let mut w = u.clone();
                w.push(eta0.ln().clamp(lower[k], upper[k]));
                out.push(w);
            }
        } else {
            out.push(u);
        }
    }
    out
}

/// Posterior mode of the range parameters (and nugget).
pub fn fit_mode(model: &GaspModel, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate_for(model)?;
    let t0 = Instant::now();
    let k = model.dim();
    let (lower, upper) = search_box(model, cfg)?;
    let settings = LbfgsSettings {
        memory: 10,
        max_iter: cfg.max_iter,
        gtol: cfg.tol,
        lower: lower.clone(),
        upper: upper.clone(),
    };
    let mut obj = PosteriorObjective {
        model,
        prior: &cfg.prior,
        param: cfg.parameterization,
        k,
        factorizations: 0,
        last_error: None,
    };
    let mut trace = FitTrace::default();
    let mut best: Option<(usize, crate::optim::LbfgsOutcome)> = None;
    let mut n_fail_chol = 0;
    let start_points = starts(model, cfg, &lower, &upper);
    trace.starts = start_points.len();
    for (s, u0) in start_points.iter().enumerate() {
        if s == 0 {
            // outputs explained exactly by the mean basis are a data problem
            let (xi, eta) = obj.split(u0);
            if let Err(e @ GaspError::DegenerateOutput(_)) = model.state(&RangeParams::xi(xi)?, eta) {
                return Err(e);
            }
        }
        let out = minimize(&mut obj, u0, &settings);
        match out {
            Some(o) => {
                trace.n_objective_evals += o.n_value;
                trace.n_gradient_evals += o.n_grad;
                trace.iterations += o.iterations;
                if best.as_ref().map_or(true, |(_, b)| o.f < b.f) {
                    best = Some((s, o));
                }
            }
            None => {
                // the start evaluation alone
                trace.n_objective_evals += 1;
                trace.n_gradient_evals += usize::from(cfg.max_iter > 0);
                if matches!(obj.last_error, Some(GaspError::SingularCovariance { .. })) {
                    n_fail_chol += 1;
                }
            }
        }
    }
    let Some((best_start, mut out)) = best else {
        return Err(if n_fail_chol == trace.starts {
            GaspError::Fit("Cholesky factorization failed at every start".into())
        } else {
            GaspError::Config(format!(
                "objective is not finite at any start{}",
                obj.last_error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
            ))
        });
    };
    let mut beta: Vec<f64> = (0..k)
        .map(|l| match cfg.parameterization {
            Parameterization::Gamma => (-out.x[l]).exp(),
            _ => out.x[l].exp(),
        })
        .collect();
    let eta = if model.nugget_enabled() { out.x[k].exp() } else { 0.0 };
    // β ≥ 0 boundary: snap coordinates resting on the lower bound to zero
    // when that does not lower the posterior
    if cfg.parameterization == Parameterization::Beta {
        for l in 0..k {
            if out.x[l] <= lower[l] {
                let mut trial = beta.clone();
                trial[l] = 0.0;
                let p = RangeParams::beta(trial.clone())?;
                obj.factorizations += 1;
                trace.n_objective_evals += 1;
                if let Ok(v) = log_posterior(model, &cfg.prior, &p, eta) {
                    if v.is_finite() && -v <= out.f {
                        beta = trial;
                        out.f = -v;
                    }
                }
            }
        }
    }
    trace.best_start = best_start;
    trace.converged = out.converged;
    trace.grad_norm = out.pg_norm;
    trace.at_bound = (0..out.x.len())
        .filter(|&i| out.x[i] <= lower[i] || out.x[i] >= upper[i])
        .collect();
    let params = RangeParams::beta(beta.clone())?;
    let st = model.state(&params, eta)?;
    obj.factorizations += 1;
    trace.n_factorizations = obj.factorizations;
    let robustness = robustness_check(model, &params);
    Ok(FitResult {
        parameterization: cfg.parameterization,
        gamma: params.to_gamma(),
        xi: params.to_xi(),
        beta,
        eta,
        theta_m: st.theta_hat.iter().copied().collect(),
        sigma2: st.sigma2_hat(),
        log_post: -out.f,
        robustness,
        trace,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Wall-clock time and evaluation counts of one [`fit_mode`] call.
pub fn profile_timings(model: &GaspModel, cfg: &FitConfig) -> Result<Timings> {
    let t0 = Instant::now();
    let r = fit_mode(model, cfg)?;
    Ok(Timings {
        seconds_total: t0.elapsed().as_secs_f64(),
        n_objective_evals: r.trace.n_objective_evals,
        n_gradient_evals: r.trace.n_gradient_evals,
        n_factorizations: r.trace.n_factorizations,
    })
}
