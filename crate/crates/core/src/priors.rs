//! Priors on the range (and nugget) parameters: the jointly robust (JR) prior
//! with its closed-form constant, moments and gradient, and the reference
//! prior through the expected Fisher information.

use statrs::function::gamma::ln_gamma;

use crate::design::DesignMatrix;
use crate::error::{GaspError, Result};
use crate::kernels::RangeParams;
use crate::model::GaspModel;

/// Hyperparameters of the JR prior
/// `π(β, η) ∝ (Σ C_l β_l + η)^a · exp{−b (Σ C_l β_l + η)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct JrParams {
    pub a: f64,
    pub b: f64,
    pub c: Vec<f64>,
}

/// Which default `a` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JrContext {
    /// `a = 1/5`.
    Emulation,
    /// `a = 1/2 − p_x`.
    Calibration,
}

impl JrParams {
    pub fn new(a: f64, b: f64, c: Vec<f64>) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(GaspError::Config(format!("JR prior rate b must be positive, got {b}")));
        }
        if c.is_empty() {
            return Err(GaspError::Config("JR prior needs at least one scale constant".into()));
        }
        if let Some((l, v)) = c.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(GaspError::Config(format!("JR prior scale C_{} must be positive, got {v}", l + 1)));
        }
        if !a.is_finite() {
            return Err(GaspError::Config(format!("JR prior exponent a must be finite, got {a}")));
        }
        Ok(Self { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Whether the density is proper for the given form.
    pub fn is_proper(&self, with_nugget: bool) -> bool {
        let p = self.dim() as f64;
        if with_nugget {
            self.a > -(p + 1.0)
        } else {
            self.a > -p
        }
    }

    /// `log C` (with nugget) or `log C₀` (without).
    pub fn log_norm_const(&self, with_nugget: bool) -> f64 {
        let p = self.dim() as f64;
        let sum_log_c: f64 = self.c.iter().map(|v| v.ln()).sum();
        if with_nugget {
            ln_gamma(p + 1.0) + (self.a + p + 1.0) * self.b.ln() + sum_log_c - ln_gamma(self.a + p + 1.0)
        } else {
            ln_gamma(p) + (self.a + p) * self.b.ln() + sum_log_c - ln_gamma(self.a + p)
        }
    }

    fn total(&self, beta: &[f64], eta: Option<f64>) -> Result<f64> {
        if beta.len() != self.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "inverse ranges vs JR scale constants",
                expected: self.dim(),
                got: beta.len(),
            });
        }
        if let Some(v) = beta.iter().chain(eta.iter()).find(|v| !(**v >= 0.0)) {
            return Err(GaspError::Domain(format!("JR prior arguments must be non-negative, got {v}")));
        }
        Ok(self.c.iter().zip(beta).map(|(c, b)| c * b).sum::<f64>() + eta.unwrap_or(0.0))
    }
}

/// Default JR hyperparameters: `b = 1`, `C_l = n^{−1/p_x}·(x_max,l − x_min,l)`.
pub fn jr_default_params(design: &DesignMatrix, context: JrContext) -> Result<JrParams> {
    let widths: Vec<f64> = design.bounds().into_iter().map(|(lo, hi)| hi - lo).collect();
    jr_params_from_extent(design.nrows(), &widths, context)
}

/// Default JR hyperparameters from a run count and per-coordinate widths.
pub fn jr_params_from_extent(n: usize, widths: &[f64], context: JrContext) -> Result<JrParams> {
    let p = widths.len();
    if n == 0 || p == 0 {
        return Err(GaspError::Config("default JR prior needs at least one run and one coordinate".into()));
    }
    let factor = (n as f64).powf(-1.0 / p as f64);
    let mut c = Vec::with_capacity(p);
    for (l, &w) in widths.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(GaspError::Config(format!(
                "input coordinate {} has zero width; cannot set a default JR scale",
                l + 1
            )));
        }
        c.push(factor * w);
    }
    let a = match context {
        JrContext::Emulation => 0.2,
        JrContext::Calibration => 0.5 - p as f64,
    };
    JrParams::new(a, 1.0, c)
}

/// Normalized log density at `(β, η)`; `eta = None` selects the no-nugget form.
///
/// At `t = Σ C_l β_l (+η) = 0` the limit is returned: `−∞` for `a > 0`,
/// `+∞` for `a < 0`.
pub fn jr_log_density(p: &JrParams, beta: &[f64], eta: Option<f64>) -> Result<f64> {
    let t = p.total(beta, eta)?;
    let log_c = p.log_norm_const(eta.is_some());
    if t == 0.0 {
        return Ok(if p.a > 0.0 {
            f64::NEG_INFINITY
        } else if p.a < 0.0 {
            f64::INFINITY
        } else {
            log_c
        });
    }
    Ok(log_c + p.a * t.ln() - p.b * t)
}

/// Gradient of [`jr_log_density`] with respect to `β` (and `η` last).
pub fn jr_log_density_grad(p: &JrParams, beta: &[f64], eta: Option<f64>) -> Result<Vec<f64>> {
    let t = p.total(beta, eta)?;
    if t == 0.0 && p.a != 0.0 {
        return Err(GaspError::Numerical("JR prior gradient is singular at Σ C_l β_l + η = 0".into()));
    }
    let s = if p.a == 0.0 { -p.b } else { p.a / t - p.b };
    let mut g: Vec<f64> = p.c.iter().map(|c| s * c).collect();
    if eta.is_some() {
        g.push(s);
    }
    Ok(g)
}

/// Closed-form prior means and variances of `β_l` and `η` (nugget form).
#[derive(Debug, Clone, PartialEq)]
pub struct JrMoments {
    pub mean_beta: Vec<f64>,
    pub mean_eta: f64,
    pub var_beta: Vec<f64>,
    pub var_eta: f64,
}

pub fn jr_moments(p: &JrParams) -> Result<JrMoments> {
    if !p.is_proper(true) {
        return Err(GaspError::Config(format!(
            "JR prior with a = {} is improper for p_x = {}",
            p.a,
            p.dim()
        )));
    }
    let px = p.dim() as f64;
    let s = p.a + px + 1.0;
    let mean_unit = s / ((px + 1.0) * p.b);
    let var_unit = s * ((px + 1.0).powi(2) + px + p.a * px + 1.0)
        / ((px + 1.0).powi(2) * (px + 2.0) * p.b * p.b);
    Ok(JrMoments {
        mean_beta: p.c.iter().map(|c| mean_unit / c).collect(),
        mean_eta: mean_unit,
        var_beta: p.c.iter().map(|c| var_unit / (c * c)).collect(),
        var_eta: var_unit,
    })
}

/// `½·log det I*`, the unnormalized reference prior in the parameterization
/// of `params` (with `η` as the nugget coordinate when enabled).
pub fn reference_log_density(model: &GaspModel, params: &RangeParams, eta: f64) -> Result<f64> {
    let info = model.fisher_info(params, eta)?;
    log_det_half(&info)
}

pub(crate) fn log_det_half(info: &nalgebra::DMatrix<f64>) -> Result<f64> {
    if info.iter().any(|v| !v.is_finite()) {
        return Err(GaspError::Numerical("non-finite Fisher information".into()));
    }
    if let Some(ch) = nalgebra::Cholesky::new(info.clone()) {
        return Ok(ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum());
    }
    let eig = info.clone().symmetric_eigen();
    let scale = info.norm();
    let min = eig.eigenvalues.min();
    if min < -1e-8 * scale {
        return Err(GaspError::Numerical(format!(
            "Fisher information is not positive semi-definite; eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let mut s = 0.0;
    for &v in eig.eigenvalues.iter() {
        if v <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        s += v.ln();
    }
    Ok(0.5 * s)
}

/// Prior family on the covariance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Reference,
    Jr,
}

impl std::str::FromStr for PriorKind {
    type Err = GaspError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reference" | "ref" => Ok(PriorKind::Reference),
            "jr" | "jointly-robust" => Ok(PriorKind::Jr),
            other => Err(GaspError::Config(format!("unknown prior kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub jr: Option<JrParams>,
    pub nugget: bool,
}

impl PriorSpec {
    pub fn reference(nugget: bool) -> Self {
        Self {
            kind: PriorKind::Reference,
            jr: None,
            nugget,
        }
    }

    pub fn jr(params: JrParams, nugget: bool) -> Self {
        Self {
            kind: PriorKind::Jr,
            jr: Some(params),
            nugget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PriorKind::Jr && self.jr.is_none() {
            return Err(GaspError::Config("JR prior requires hyperparameters".into()));
        }
        Ok(())
    }
}
