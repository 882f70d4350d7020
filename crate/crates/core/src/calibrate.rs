//! Bayesian calibration of a computer model with a GaSP discrepancy.
//!
//! Field data follow `y = f^M(x, θ) + h(x)θ_m + δ(x) + ε`, with `δ` a GaSP
//! and `ε` folded in through the nugget. The sampler works on `θ`, `ξ = ln β`
//! and `log η`, integrating `(θ_m, σ²)` out for the Metropolis blocks and
//! drawing them exactly afterwards.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::bench::nrmse;
use crate::design::DesignMatrix;
use crate::error::{GaspError, Result};
use crate::fit::{fit_mode, FitConfig, FitResult};
use crate::kernels::{cross_corr, CorrelationSpec, Kernel1D, RangeParams};
use crate::model::{factorize, GaspModel, LikelihoodState, MeanBasis};
use crate::optim::{minimize, LbfgsSettings, Objective};
use crate::priors::{jr_log_density, log_det_half, PriorKind, PriorSpec};

/// Computer model `f^M(x, θ)`.
pub type ModelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// Extra log density on `θ`, added to the box-uniform prior.
pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

const TARGET_ACCEPT: f64 = 0.3;
const INIT_SCALE: f64 = 0.1;
const MAX_CONSECUTIVE_FAILURES: usize = 100;
/// Sampler box on `ξ` around its starting value.
const XI_HALF_WIDTH: f64 = 15.0;
const LOG_ETA_RANGE: (f64, f64) = (-27.631021115928547, 9.210340371976184); // ln 1e-12, ln 1e4

/// A GaSP emulator of the computer model, fitted to runs over `(x, θ)`.
pub struct ModularEmulator {
    model: GaspModel,
    fit: FitResult,
    state: LikelihoodState,
    p_x: usize,
}

impl std::fmt::Debug for ModularEmulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModularEmulator")
            .field("runs", &self.model.n())
            .field("p_x", &self.p_x)
            .finish()
    }
}

impl ModularEmulator {
    pub fn model(&self) -> &GaspModel {
        &self.model
    }

    pub fn fit(&self) -> &FitResult {
        &self.fit
    }

    pub fn p_x(&self) -> usize {
        self.p_x
    }

    pub fn p_theta(&self) -> usize {
        self.model.dim() - self.p_x
    }

    fn inputs(&self, x: &DMatrix<f64>, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.model.dim(), |i, j| {
            if j < self.p_x {
                x[(i, j)]
            } else {
                theta[j - self.p_x]
            }
        })
    }

    /// Predictive mean at `(x_i, θ)` and per-row extrapolation flags.
    pub fn mean(&self, x: &DMatrix<f64>, theta: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        let pd = self
            .model
            .predict_with_state(&self.state, &self.fit.range_params(), &self.inputs(x, theta))?;
        Ok((pd.mean, pd.extrapolated))
    }

    /// One joint Gaussian draw (plug-in variance) at `(x_i, θ)`.
    pub fn draw<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let (mean, mut cov) =
            self.model
                .predict_joint_with_state(&self.state, &self.fit.range_params(), &self.inputs(x, theta))?;
        let max_diag = cov.diagonal().max();
        if !(max_diag > 1e-14 * self.fit.sigma2) {
            return Ok(mean.as_slice().to_vec());
        }
        for i in 0..cov.nrows() {
            cov[(i, i)] += 1e-10 * max_diag;
        }
        let (chol, _) = factorize(cov)?;
        let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok((mean + chol.l() * z).as_slice().to_vec())
    }
}

/// Fits an emulator to computer-model runs. Columns `0..p_x` of `design` are
/// the field inputs, the rest are `θ`.
pub fn fit_emulator_modular(design: DesignMatrix, outputs: Vec<f64>, p_x: usize) -> Result<ModularEmulator> {
    if p_x == 0 || p_x >= design.dim() {
        return Err(GaspError::Config(format!(
            "emulator runs need 1..{} field-input columns, got p_x = {p_x}",
            design.dim()
        )));
    }
    let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), design.dim())?;
    let model = GaspModel::new(design, outputs, MeanBasis::Constant, spec, false)?;
    let cfg = FitConfig::jr_default(&model)?;
    let fit = fit_mode(&model, &cfg)?;
    let state = fit.state(&model)?;
    Ok(ModularEmulator {
        model,
        fit,
        state,
        p_x,
    })
}

#[derive(Clone)]
pub enum ComputerModel {
    Function(ModelFn),
    Emulator(Arc<ModularEmulator>),
}

impl std::fmt::Debug for ComputerModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ComputerModel::Function(_) => f.write_str("Function"),
            ComputerModel::Emulator(e) => write!(f, "Emulator({e:?})"),
        }
    }
}

/// Box-uniform prior on `θ` with an optional extra log density.
#[derive(Clone)]
pub struct ThetaPrior {
    pub bounds: Vec<(f64, f64)>,
    pub log_density: Option<LogDensityFn>,
}

impl ThetaPrior {
    pub fn uniform(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            bounds,
            log_density: None,
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.bounds).all(|(t, (lo, hi))| t >= lo && t <= hi)
    }

    /// Log density up to a constant; `-∞` outside the box.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        self.log_density.as_ref().map_or(0.0, |f| f(theta))
    }
}

/// Rank check on `(H, y^F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProprietyReport {
    pub n: usize,
    pub q: usize,
    pub rank: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl std::fmt::Display for ProprietyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: rank(H, y) = {} of {} (tol {:e}); n = {} vs q + 1 = {}",
            if self.pass { "pass" } else { "fail" },
            self.rank,
            self.q + 1,
            self.tolerance,
            self.n,
            self.q + 1
        )
    }
}

pub fn propriety_report(field: &DesignMatrix, y: &[f64], basis: &MeanBasis) -> ProprietyReport {
    let h = basis.matrix(field.matrix());
    let n = h.nrows();
    let q = h.ncols();
    let mut hy = DMatrix::zeros(n, q + 1);
    hy.view_mut((0, 0), (n, q)).copy_from(&h);
    for i in 0..n.min(y.len()) {
        hy[(i, q)] = y[i];
    }
    let tolerance = 1e-10 * hy.norm();
    let rank = hy.svd(false, false).rank(tolerance);
    ProprietyReport {
        n,
        q,
        rank,
        tolerance,
        pass: y.len() == n && n > q && rank == q + 1,
    }
}

/// Field data, computer model, priors and discrepancy structure.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    field: GaspModel,
    computer: ComputerModel,
    theta_prior: ThetaPrior,
    prior: PriorSpec,
}

impl std::fmt::Debug for ThetaPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThetaPrior")
            .field("bounds", &self.bounds)
            .field("log_density", &self.log_density.is_some())
            .finish()
    }
}

impl CalibrationProblem {
    pub fn new(
        field: DesignMatrix,
        y: Vec<f64>,
        computer: ComputerModel,
        theta_prior: ThetaPrior,
        basis: MeanBasis,
        spec: CorrelationSpec,
        prior: PriorSpec,
    ) -> Result<Self> {
        prior.validate()?;
        let report = propriety_report(&field, &y, &basis);
        if y.len() == field.nrows() && !report.pass {
            return Err(GaspError::Rank(format!("posterior propriety precondition: {report}")));
        }
        if prior.kind == PriorKind::Reference && basis == MeanBasis::Zero {
            return Err(GaspError::Config("the reference prior needs an intercept in the mean basis".into()));
        }
        if let Some(jr) = &prior.jr {
            if jr.dim() != field.dim() {
                return Err(GaspError::DimensionMismatch {
                    what: "JR scale constants vs field inputs",
                    expected: field.dim(),
                    got: jr.dim(),
                });
            }
            if !jr.is_proper(prior.nugget) {
                return Err(GaspError::Config("JR prior must be proper for calibration".into()));
            }
        }
        if theta_prior.bounds.is_empty() {
            return Err(GaspError::Config("calibration needs at least one θ".into()));
        }
        for (l, &(lo, hi)) in theta_prior.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(GaspError::Config(format!("θ_{} bounds [{lo}, {hi}] are invalid", l + 1)));
            }
        }
        if let ComputerModel::Emulator(e) = &computer {
            if e.p_x() != field.dim() || e.p_theta() != theta_prior.bounds.len() {
                return Err(GaspError::DimensionMismatch {
                    what: "emulator inputs vs field inputs + θ",
                    expected: field.dim() + theta_prior.bounds.len(),
                    got: e.model().dim(),
                });
            }
        }
        let field = GaspModel::new(field, y, basis, spec, prior.nugget)?;
        Ok(Self {
            field,
            computer,
            theta_prior,
            prior,
        })
    }

    pub fn field(&self) -> &GaspModel {
        &self.field
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn theta_prior(&self) -> &ThetaPrior {
        &self.theta_prior
    }

    pub fn computer(&self) -> &ComputerModel {
        &self.computer
    }

    pub fn p_theta(&self) -> usize {
        self.theta_prior.bounds.len()
    }

    pub fn propriety(&self) -> ProprietyReport {
        propriety_report(self.field.design(), self.field.outputs().as_slice(), self.field.basis())
    }

    /// `f^M(x_i, θ)` at arbitrary inputs, using the emulator mean in modular mode.
    pub fn model_mean(&self, x: &DMatrix<f64>, theta: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        match &self.computer {
            ComputerModel::Function(f) => {
                let mut out = Vec::with_capacity(x.nrows());
                for i in 0..x.nrows() {
                    let row: Vec<f64> = x.row(i).iter().copied().collect();
                    let v = f(&row, theta);
                    if !v.is_finite() {
                        return Err(GaspError::Data(format!("computer model is {v} at x = {row:?}, θ = {theta:?}")));
                    }
                    out.push(v);
                }
                Ok((out, vec![false; x.nrows()]))
            }
            ComputerModel::Emulator(e) => e.mean(x, theta),
        }
    }

    /// `f^M` at the field inputs; an emulator enters through its predictive mean.
    fn field_model_values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match &self.computer {
            ComputerModel::Function(_) => Ok(self.model_mean(self.field.design().matrix(), theta)?.0),
            ComputerModel::Emulator(e) => e.mean(self.field.design().matrix(), theta).map(|(m, _)| m),
        }
    }

    fn residual(&self, fm: &[f64]) -> DVector<f64> {
        self.field.outputs() - DVector::from_column_slice(fm)
    }

    fn eta_of(&self, log_eta: f64) -> f64 {
        if self.prior.nugget {
            log_eta.exp()
        } else {
            0.0
        }
    }

    /// Covariance state and log prior density of `(ξ, log η)`.
    fn cov_state(&self, xi: &[f64], log_eta: f64) -> Result<(LikelihoodState, f64)> {
        let params = RangeParams::xi(xi.to_vec())?;
        let eta = self.eta_of(log_eta);
        let eta_jac = if self.prior.nugget { log_eta } else { 0.0 };
        match self.prior.kind {
            PriorKind::Jr => {
                let st = self.field.state(&params, eta)?;
                let jr = self.prior.jr.as_ref().expect("validated");
                let beta = params.to_beta();
                let lp = jr_log_density(jr, &beta, self.prior.nugget.then_some(eta))? + xi.iter().sum::<f64>() + eta_jac;
                Ok((st, lp))
            }
            PriorKind::Reference => {
                let (r, dr) = self.field.correlation(&params, true)?;
                let st = self.field.state_from_corr(r, eta)?;
                let lp = log_det_half(&st.fisher_info(&dr, self.prior.nugget))? + eta_jac;
                Ok((st, lp))
            }
        }
    }

    /// Log posterior of `(θ, ξ, log η)` with `(θ_m, σ²)` integrated out, up to a
    /// constant. `log_eta` is ignored without a nugget.
    pub fn log_posterior(&self, theta: &[f64], xi: &[f64], log_eta: f64) -> Result<f64> {
        let lpt = self.theta_prior.log_density(theta);
        if !lpt.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let ComputerModel::Function(_) = &self.computer else {
            return Err(GaspError::Config("log posterior needs a directly evaluable computer model".into()));
        };
        let fm = self.model_mean(self.field.design().matrix(), theta)?.0;
        let (st, lp) = self.cov_state(xi, log_eta)?;
        Ok(st.log_marginal_lik_for(&self.residual(&fm)) + lp + lpt)
    }

    /// `(θ_m, σ²)` conditionals with `θ`, `ξ` and `η` held fixed.
    pub fn fixed_conditionals(&self, theta: &[f64], xi: &[f64], eta: f64) -> Result<FixedConditionals> {
        let params = RangeParams::xi(xi.to_vec())?;
        let eta = if self.prior.nugget { eta } else { 0.0 };
        let fm = self.field_model_values(theta)?;
        let r = self.residual(&fm);
        let st = self.field.state(&params, eta)?;
        if self.field.q() == 0 {
            return Err(GaspError::Config("mean-parameter conditionals need q > 0".into()));
        }
        Ok(FixedConditionals {
            h: self.field.basis_matrix().clone(),
            r,
            st,
        })
    }
}

/// Gibbs conditionals for `(θ_m, σ²)` given everything else.
pub struct FixedConditionals {
    h: DMatrix<f64>,
    r: DVector<f64>,
    st: LikelihoodState,
}

impl FixedConditionals {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    fn quad(&self, theta_m: &[f64]) -> f64 {
        let e = &self.r - &self.h * DVector::from_column_slice(theta_m);
        e.dot(&self.st.solve(&e))
    }

    /// `log p(r | θ_m, σ²) − log σ²`, constants included.
    pub fn log_joint(&self, theta_m: &[f64], sigma2: f64) -> f64 {
        let n = self.n() as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - 0.5 * self.st.log_det_c
            - 0.5 * self.quad(theta_m) / sigma2
            - sigma2.ln()
    }

    /// `σ² | θ_m ~ IG(shape, scale)`.
    pub fn sigma2_given_theta_m(&self, theta_m: &[f64]) -> (f64, f64) {
        (0.5 * self.n() as f64, 0.5 * self.quad(theta_m))
    }

    /// `θ_m | σ² ~ N(mean, cov)`.
    pub fn theta_m_given_sigma2(&self, sigma2: f64) -> (DVector<f64>, DMatrix<f64>) {
        (self.st.theta_hat_for(&self.r), self.st.htcih_inv() * sigma2)
    }

    /// Marginal `σ² ~ IG((n−q)/2, S²/2)` after integrating out `θ_m`.
    pub fn sigma2_marginal(&self) -> (f64, f64) {
        (0.5 * (self.n() - self.q()) as f64, 0.5 * self.st.s2_for(&self.r))
    }

    /// Analytic posterior means and variances: `(E θ_m, Var θ_m diag, E σ², Var σ²)`.
    pub fn analytic_moments(&self) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let (a, b) = self.sigma2_marginal();
        let mean_s2 = b / (a - 1.0);
        let var_s2 = if a > 2.0 { mean_s2 * mean_s2 / (a - 2.0) } else { f64::INFINITY };
        let th = self.st.theta_hat_for(&self.r);
        let var_th = self.st.htcih_inv().diagonal() * mean_s2;
        (th.as_slice().to_vec(), var_th.as_slice().to_vec(), mean_s2, var_s2)
    }

    /// Two-block Gibbs sampler alternating `θ_m | σ²` and `σ² | θ_m`.
    pub fn gibbs_chain(&self, draws: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sigma2 = self.sigma2_marginal().1 / self.sigma2_marginal().0;
        let chol = factorize(self.st.htcih_inv().clone())?.0;
        let mut th_out = Vec::with_capacity(draws);
        let mut s2_out = Vec::with_capacity(draws);
        for _ in 0..draws {
            let (mean, _) = self.theta_m_given_sigma2(sigma2);
            let z = DVector::from_fn(self.q(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let th = mean + chol.l() * z * sigma2.sqrt();
            let (a, b) = self.sigma2_given_theta_m(th.as_slice());
            sigma2 = inv_gamma(&mut rng, a, b)?;
            th_out.push(th.as_slice().to_vec());
            s2_out.push(sigma2);
        }
        Ok((th_out, s2_out))
    }
}

fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0).map_err(|e| GaspError::Numerical(format!("gamma draw: {e}")))?;
    Ok(scale / g.sample(rng))
}

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub s: usize,
    pub s0: usize,
    pub seed: u64,
    /// Starting `θ`; the box centre when `None`.
    pub theta_init: Option<Vec<f64>>,
    /// Starting `ξ`; `−ln C_l` with `C_l = n^{-1/p}·width` when `None`.
    pub xi_init: Option<Vec<f64>>,
    pub log_eta_init: f64,
}

impl McmcConfig {
    pub fn new(s: usize, s0: usize, seed: u64) -> Self {
        Self {
            s,
            s0,
            seed,
            theta_init: None,
            xi_init: None,
            log_eta_init: (0.1f64).ln(),
        }
    }
}

/// Posterior samples (burn-in included; see [`PosteriorChain::retained`]).
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    pub theta: Vec<Vec<f64>>,
    pub theta_m: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    /// Empty without a nugget.
    pub log_eta: Vec<f64>,
    /// `f^M` at the field inputs used for each sample.
    pub field_model: Vec<Vec<f64>>,
    pub s: usize,
    pub s0: usize,
    /// Post-burn-in acceptance rates of the `θ` and `(ξ, log η)` blocks.
    pub accept_theta: f64,
    pub accept_cov: f64,
    pub scale_theta: f64,
    pub scale_cov: f64,
    pub seed: u64,
}

impl PosteriorChain {
    pub fn retained(&self) -> std::ops::Range<usize> {
        self.s0..self.s
    }

    fn eta(&self, i: usize) -> f64 {
        self.log_eta.get(i).map_or(0.0, |v| v.exp())
    }

    pub fn median_xi(&self, l: usize) -> f64 {
        median(self.retained().map(|i| self.xi[i][l]).collect())
    }

    pub fn median_theta(&self, l: usize) -> f64 {
        median(self.retained().map(|i| self.theta[i][l]).collect())
    }

    /// One row per sample: `iter, theta_*, theta_m_*, sigma2, xi_*, log_eta`.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["iter".to_string()];
        head.extend((1..=self.theta[0].len()).map(|l| format!("theta_{l}")));
        head.extend((1..=self.theta_m[0].len()).map(|l| format!("theta_m_{l}")));
        head.push("sigma2".into());
        head.extend((1..=self.xi[0].len()).map(|l| format!("xi_{l}")));
        if !self.log_eta.is_empty() {
            head.push("log_eta".into());
        }
        let mut out = head.join(",") + "\n";
        for i in 0..self.s {
            let mut row = vec![i.to_string()];
            row.extend(self.theta[i].iter().map(|v| format!("{v:?}")));
            row.extend(self.theta_m[i].iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", self.sigma2[i]));
            row.extend(self.xi[i].iter().map(|v| format!("{v:?}")));
            if let Some(v) = self.log_eta.get(i) {
                row.push(format!("{v:?}"));
            }
            out += &row.join(",");
            out.push('\n');
        }
        out
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    quantile_sorted(
        {
            v.sort_by(f64::total_cmp);
            &v
        },
        0.5,
    )
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

struct CovPoint {
    xi: Vec<f64>,
    log_eta: f64,
    st: LikelihoodState,
    log_prior: f64,
}

/// Metropolis-within-Gibbs sampler.
///
/// Each sweep updates `θ` by random-walk Metropolis (scale relative to the box
/// width), then `(ξ, log η)` jointly by random-walk Metropolis, both against the
/// likelihood with `(θ_m, σ²)` integrated out; then `σ²` and `θ_m` are drawn
/// from their exact conditionals. Step sizes adapt toward acceptance 0.3
/// during burn-in only.
pub fn run_mcmc(prob: &CalibrationProblem, cfg: &McmcConfig) -> Result<PosteriorChain> {
    if cfg.s <= cfg.s0 {
        return Err(GaspError::Config(format!("need S > S0 (S = {}, S0 = {})", cfg.s, cfg.s0)));
    }
    let n = prob.field.n();
    let p_x = prob.field.dim();
    let p_t = prob.p_theta();
    let q = prob.field.q();
    let nugget = prob.prior.nugget;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let widths: Vec<f64> = prob.theta_prior.bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let theta0 = cfg
        .theta_init
        .clone()
        .unwrap_or_else(|| prob.theta_prior.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
    if theta0.len() != p_t || !prob.theta_prior.log_density(&theta0).is_finite() {
        return Err(GaspError::Config(format!("starting θ {theta0:?} is outside the prior support")));
    }
    let xi0 = match &cfg.xi_init {
        Some(v) if v.len() == p_x => v.clone(),
        Some(v) => {
            return Err(GaspError::DimensionMismatch {
                what: "starting ξ",
                expected: p_x,
                got: v.len(),
            })
        }
        None => prob
            .field
            .design()
            .bounds()
            .iter()
            .map(|(lo, hi)| -((n as f64).powf(-1.0 / p_x as f64) * (hi - lo).max(f64::MIN_POSITIVE)).ln())
            .collect(),
    };
    let xi_box: Vec<(f64, f64)> = xi0.iter().map(|v| (v - XI_HALF_WIDTH, v + XI_HALF_WIDTH)).collect();
    let log_eta0 = if nugget { cfg.log_eta_init } else { 0.0 };

    let mut theta = theta0;
    let mut fm = prob.field_model_values(&theta)?;
    let mut r = prob.residual(&fm);
    let (st, lp) = prob.cov_state(&xi0, log_eta0).map_err(|e| {
        GaspError::Chain(format!("cannot evaluate the starting state ξ = {xi0:?}, log η = {log_eta0}: {e}"))
    })?;
    let mut cur = CovPoint {
        xi: xi0,
        log_eta: log_eta0,
        st,
        log_prior: lp,
    };
    let mut ll = cur.st.log_marginal_lik_for(&r);
    let mut lpt = prob.theta_prior.log_density(&theta);

    let mut log_s_theta = INIT_SCALE.ln();
    let mut log_s_cov = INIT_SCALE.ln();
    let mut acc_t = 0usize;
    let mut acc_c = 0usize;
    let mut failures = 0usize;

    let mut chain = PosteriorChain {
        theta: Vec::with_capacity(cfg.s),
        theta_m: Vec::with_capacity(cfg.s),
        sigma2: Vec::with_capacity(cfg.s),
        xi: Vec::with_capacity(cfg.s),
        log_eta: Vec::with_capacity(if nugget { cfg.s } else { 0 }),
        field_model: Vec::with_capacity(cfg.s),
        s: cfg.s,
        s0: cfg.s0,
        accept_theta: 0.0,
        accept_cov: 0.0,
        scale_theta: 0.0,
        scale_cov: 0.0,
        seed: cfg.seed,
    };

    for it in 0..cfg.s {
        let burn = it < cfg.s0;
        let rate = ((it + 1) as f64).powf(-0.6);

        // θ block
        let s_t = log_s_theta.exp();
        let prop: Vec<f64> = theta
            .iter()
            .zip(&widths)
            .map(|(t, w)| t + s_t * w * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lpt_new = prob.theta_prior.log_density(&prop);
        let mut accepted = false;
        if lpt_new.is_finite() {
            let fm_new = prob.field_model_values(&prop)?;
            let r_new = prob.residual(&fm_new);
            let ll_new = cur.st.log_marginal_lik_for(&r_new);
            let log_alpha = ll_new + lpt_new - ll - lpt;
            if ll_new.is_finite() && rng.random::<f64>().ln() < log_alpha {
                theta = prop;
                fm = fm_new;
                r = r_new;
                ll = ll_new;
                lpt = lpt_new;
                accepted = true;
            }
        }
        if burn {
            log_s_theta += rate * (accepted as u8 as f64 - TARGET_ACCEPT);
        } else if accepted {
            acc_t += 1;
        }

        // (ξ, log η) block
        let s_c = log_s_cov.exp();
        let xi_new: Vec<f64> = cur.xi.iter().map(|v| v + s_c * rng.sample::<f64, _>(StandardNormal)).collect();
        let le_new = if nugget {
            cur.log_eta + s_c * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let inside = xi_new.iter().zip(&xi_box).all(|(v, (lo, hi))| v >= lo && v <= hi)
            && (!nugget || (LOG_ETA_RANGE.0..=LOG_ETA_RANGE.1).contains(&le_new));
        let mut accepted = false;
        if inside {
            match prob.cov_state(&xi_new, le_new) {
                Ok((st, lp)) => {
                    failures = 0;
                    let ll_new = st.log_marginal_lik_for(&r);
                    let log_alpha = ll_new + lp - ll - cur.log_prior;
                    if ll_new.is_finite() && lp.is_finite() && rng.random::<f64>().ln() < log_alpha {
                        cur = CovPoint {
                            xi: xi_new,
                            log_eta: le_new,
                            st,
                            log_prior: lp,
                        };
                        ll = ll_new;
                        accepted = true;
                    }
                }
                Err(e) => {
                    failures += 1;
                    if failures > MAX_CONSECUTIVE_FAILURES {
                        return Err(GaspError::Chain(format!(
                            "{failures} consecutive factorization failures at iteration {it}; \
                             state θ = {theta:?}, ξ = {:?}, log η = {}; last proposal ξ = {xi_new:?}, \
                             log η = {le_new}: {e}",
                            cur.xi, cur.log_eta
                        )));
                    }
                }
            }
        }
        if burn {
            log_s_cov += rate * (accepted as u8 as f64 - TARGET_ACCEPT);
        } else if accepted {
            acc_c += 1;
        }

        // exact (σ², θ_m) draws
        let s2 = cur.st.s2_for(&r);
        let sigma2 = inv_gamma(&mut rng, 0.5 * (n - q) as f64, 0.5 * s2)?;
        let theta_m = if q > 0 {
            let mean = cur.st.theta_hat_for(&r);
            let l = factorize(cur.st.htcih_inv().clone())?.0;
            let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            (mean + l.l() * z * sigma2.sqrt()).as_slice().to_vec()
        } else {
            Vec::new()
        };

        chain.theta.push(theta.clone());
        chain.theta_m.push(theta_m);
        chain.sigma2.push(sigma2);
        chain.xi.push(cur.xi.clone());
        if nugget {
            chain.log_eta.push(cur.log_eta);
        }
        chain.field_model.push(fm.clone());
    }
    let kept = (cfg.s - cfg.s0) as f64;
    chain.accept_theta = acc_t as f64 / kept;
    chain.accept_cov = acc_c as f64 / kept;
    chain.scale_theta = log_s_theta.exp();
    chain.scale_cov = log_s_cov.exp();
    Ok(chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// `f^M(x, θ) + h(x)θ_m`.
    ModelOnly,
    /// Adds the discrepancy; intervals are for the noise-free reality.
    ModelPlusDiscrepancy,
}

impl std::str::FromStr for PredictionMode {
    type Err = GaspError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model" | "model-only" => Ok(PredictionMode::ModelOnly),
            "model+discrepancy" | "discrepancy" | "full" => Ok(PredictionMode::ModelPlusDiscrepancy),
            other => Err(GaspError::Config(format!("unknown prediction mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibratedPrediction {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Emulator queried outside its training box (modular mode).
    pub extrapolated: Vec<bool>,
}

impl CalibratedPrediction {
    /// Columns `x_*, mean, lower, upper`.
    pub fn to_csv(&self, x: &DMatrix<f64>) -> String {
        let mut out: String = (1..=x.ncols()).map(|l| format!("x_{l},")).collect();
        out += "mean,lower,upper\n";
        for i in 0..self.mean.len() {
            for l in 0..x.ncols() {
                out += &format!("{:?},", x[(i, l)]);
            }
            out += &format!("{:?},{:?},{:?}\n", self.mean[i], self.lower[i], self.upper[i]);
        }
        out
    }
}

/// Pointwise posterior mean and central 95% interval over the retained samples.
pub fn predict_calibrated(
    prob: &CalibrationProblem,
    chain: &PosteriorChain,
    new_inputs: &DMatrix<f64>,
    mode: PredictionMode,
    seed: u64,
) -> Result<CalibratedPrediction> {
    let m = new_inputs.nrows();
    if new_inputs.ncols() != prob.field.dim() {
        return Err(GaspError::DimensionMismatch {
            what: "prediction input columns",
            expected: prob.field.dim(),
            got: new_inputs.ncols(),
        });
    }
    let kept: Vec<usize> = chain.retained().collect();
    if kept.is_empty() {
        return Err(GaspError::Config("chain has no retained samples".into()));
    }
    let hx = prob.field.basis().matrix(new_inputs);
    let h = prob.field.basis_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = vec![Vec::with_capacity(kept.len()); m];
    let mut sums = vec![0.0; m];
    let mut extrapolated = vec![false; m];
    for &i in &kept {
        let (fx, ex) = prob.model_mean(new_inputs, &chain.theta[i])?;
        let tm = DVector::from_column_slice(&chain.theta_m[i]);
        let base = DVector::from_vec(fx) + &hx * &tm;
        for (a, e) in ex.into_iter().enumerate() {
            extrapolated[a] |= e;
        }
        match mode {
            PredictionMode::ModelOnly => {
                for a in 0..m {
                    sums[a] += base[a];
                    draws[a].push(base[a]);
                }
            }
            PredictionMode::ModelPlusDiscrepancy => {
                let params = RangeParams::xi(chain.xi[i].clone())?;
                let st = prob.field.state(&params, chain.eta(i))?;
                let e = prob.residual(&chain.field_model[i]) - h * &tm;
                let w = st.solve(&e);
                let rx = cross_corr(prob.field.spec(), new_inputs, prob.field.design(), &params)?;
                let dmean = &rx * &w;
                for a in 0..m {
                    let ra = rx.row(a).transpose();
                    let v = chain.sigma2[i] * (1.0 - ra.dot(&st.solve(&ra))).max(0.0);
                    let mu = base[a] + dmean[a];
                    sums[a] += mu;
                    draws[a].push(mu + v.sqrt() * rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
    }
    let k = kept.len() as f64;
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for d in draws.iter_mut() {
        d.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(d, 0.025));
        upper.push(quantile_sorted(d, 0.975));
    }
    Ok(CalibratedPrediction {
        mean: sums.into_iter().map(|s| s / k).collect(),
        lower,
        upper,
        extrapolated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationMetrics {
    pub nrmse: f64,
    /// Fraction of truth values inside the 95% intervals.
    pub p_ci: f64,
    /// Mean 95% interval length.
    pub l_ci: f64,
}

/// NRMSE normalizes by the spread of `truth` about `observed_mean`.
pub fn calibration_metrics(pred: &CalibratedPrediction, truth: &[f64], observed_mean: f64) -> Result<CalibrationMetrics> {
    if truth.len() != pred.mean.len() {
        return Err(GaspError::DimensionMismatch {
            what: "truth vs predictions",
            expected: pred.mean.len(),
            got: truth.len(),
        });
    }
    let m = truth.len() as f64;
    let p_ci = truth
        .iter()
        .enumerate()
        .filter(|(i, t)| **t >= pred.lower[*i] && **t <= pred.upper[*i])
        .count() as f64
        / m;
    let l_ci = pred.upper.iter().zip(&pred.lower).map(|(u, l)| u - l).sum::<f64>() / m;
    Ok(CalibrationMetrics {
        nrmse: nrmse(truth, &pred.mean, observed_mean)?,
        p_ci,
        l_ci,
    })
}

/// Plug-in maximum likelihood calibration.
#[derive(Debug, Clone)]
pub struct MleCalibration {
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    /// `0` without a nugget.
    pub eta: f64,
    pub theta_m: Vec<f64>,
    pub sigma2: f64,
    pub log_lik: f64,
}

struct ProfileLik<'a> {
    prob: &'a CalibrationProblem,
    p_t: usize,
    p_x: usize,
}

impl ProfileLik<'_> {
    fn split<'b>(&self, u: &'b [f64]) -> (&'b [f64], &'b [f64], f64) {
        let le = if self.prob.prior.nugget { u[self.p_t + self.p_x] } else { 0.0 };
        (&u[..self.p_t], &u[self.p_t..self.p_t + self.p_x], le)
    }

    /// Negative profile log likelihood.
    fn eval(&self, u: &[f64]) -> Option<(f64, LikelihoodState, DVector<f64>)> {
        let (theta, xi, le) = self.split(u);
        let fm = self.prob.field_model_values(theta).ok()?;
        let r = self.prob.residual(&fm);
        let params = RangeParams::xi(xi.to_vec()).ok()?;
        let st = self.prob.field.state(&params, self.prob.eta_of(le)).ok()?;
        let n = self.prob.field.n() as f64;
        let s2 = st.s2_for(&r);
        if !(s2 > 0.0) {
            return None;
        }
        let f = 0.5 * n * (s2 / n).ln() + 0.5 * st.log_det_c;
        f.is_finite().then_some((f, st, r))
    }
}

impl Objective for ProfileLik<'_> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        self.eval(x).map(|e| e.0)
    }

    fn value_grad(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let f = self.value(x)?;
        let mut g = Vec::with_capacity(x.len());
        let mut y = x.to_vec();
        for k in 0..x.len() {
            let h = 1e-5 * x[k].abs().max(1.0);
            y[k] = x[k] + h;
            let fp = self.value(&y)?;
            y[k] = x[k] - h;
            let fm = self.value(&y)?;
            y[k] = x[k];
            g.push((fp - fm) / (2.0 * h));
        }
        Some((f, g))
    }
}

/// Maximizes the profile likelihood over `(θ, ξ, log η)` from a small grid of starts.
pub fn calibrate_mle(prob: &CalibrationProblem) -> Result<MleCalibration> {
    let p_t = prob.p_theta();
    let p_x = prob.field.dim();
    let n = prob.field.n();
    let nugget = prob.prior.nugget;
    let xi0: Vec<f64> = prob
        .field
        .design()
        .bounds()
        .iter()
        .map(|(lo, hi)| -((n as f64).powf(-1.0 / p_x as f64) * (hi - lo).max(f64::MIN_POSITIVE)).ln())
        .collect();
    let mut lower: Vec<f64> = prob.theta_prior.bounds.iter().map(|b| b.0).collect();
    let mut upper: Vec<f64> = prob.theta_prior.bounds.iter().map(|b| b.1).collect();
    lower.extend(xi0.iter().map(|v| v - 10.0));
    upper.extend(xi0.iter().map(|v| v + 10.0));
    if nugget {
        lower.push((1e-8f64).ln());
        upper.push((1e2f64).ln());
    }
    let settings = LbfgsSettings {
        memory: 10,
        max_iter: 300,
        gtol: 1e-6,
        lower,
        upper,
    };
    let mut obj = ProfileLik { prob, p_t, p_x };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for frac in [0.25, 0.5, 0.75] {
        for le in [(1e-1f64).ln(), (1e-4f64).ln()] {
            let mut x0: Vec<f64> = prob.theta_prior.bounds.iter().map(|(lo, hi)| lo + frac * (hi - lo)).collect();
            x0.extend(&xi0);
            if nugget {
                x0.push(le);
            }
            if let Some(out) = minimize(&mut obj, &x0, &settings) {
                if best.as_ref().is_none_or(|b| out.f < b.0) {
                    best = Some((out.f, out.x));
                }
            }
            if !nugget {
                break;
            }
        }
    }
    let (f, u) = best.ok_or_else(|| GaspError::Fit("profile likelihood could not be evaluated at any start".into()))?;
    let (_, st, r) = obj.eval(&u).expect("optimum is feasible");
    let (theta, xi, le) = obj.split(&u);
    Ok(MleCalibration {
        theta: theta.to_vec(),
        xi: xi.to_vec(),
        eta: prob.eta_of(le),
        theta_m: st.theta_hat_for(&r).as_slice().to_vec(),
        sigma2: st.s2_for(&r) / n as f64,
        log_lik: -f,
    })
}

/// Plug-in Gaussian prediction at the MLE. `ModelOnly` intervals reflect the
/// uncertainty in `θ_m` only.
pub fn predict_mle(
    prob: &CalibrationProblem,
    mle: &MleCalibration,
    new_inputs: &DMatrix<f64>,
    mode: PredictionMode,
) -> Result<CalibratedPrediction> {
    let z = 1.959963984540054;
    let (fx, extrapolated) = prob.model_mean(new_inputs, &mle.theta)?;
    let hx = prob.field.basis().matrix(new_inputs);
    let params = RangeParams::xi(mle.xi.clone())?;
    let st = prob.field.state(&params, mle.eta)?;
    let tm = DVector::from_column_slice(&mle.theta_m);
    let base = DVector::from_vec(fx) + &hx * &tm;
    let m = new_inputs.nrows();
    let mut mean = Vec::with_capacity(m);
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    let (rx, w) = if mode == PredictionMode::ModelPlusDiscrepancy {
        let fm = prob.field_model_values(&mle.theta)?;
        let e = prob.residual(&fm) - prob.field.basis_matrix() * &tm;
        let rx = cross_corr(prob.field.spec(), new_inputs, prob.field.design(), &params)?;
        (Some(rx), st.solve(&e))
    } else {
        (None, DVector::zeros(0))
    };
    let h = prob.field.basis_matrix();
    for a in 0..m {
        let h_a = hx.row(a).transpose();
        let (mu, v) = match &rx {
            None => {
                let v = if tm.is_empty() { 0.0 } else { (h_a.transpose() * st.htcih_inv() * &h_a)[(0, 0)] };
                (base[a], v)
            }
            Some(rx) => {
                let ra = rx.row(a).transpose();
                let cir = st.solve(&ra);
                let mut v = 1.0 - ra.dot(&cir);
                if !tm.is_empty() {
                    let u = &h_a - h.transpose() * &cir;
                    v += (u.transpose() * st.htcih_inv() * &u)[(0, 0)];
                }
                (base[a] + ra.dot(&w), v)
            }
        };
        let sd = (mle.sigma2 * v.max(0.0)).sqrt();
        mean.push(mu);
        lower.push(mu - z * sd);
        upper.push(mu + z * sd);
    }
    Ok(CalibratedPrediction {
        mean,
        lower,
        upper,
        extrapolated,
    })
}
