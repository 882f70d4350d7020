//! One-dimensional correlation functions, their product composition, and
//! derivatives with respect to the range parameters.
//!
//! Every kernel is evaluated through the scaled distance `r = d / γ = d·β`,
//! which keeps the inverse-range limit `β → 0` (an inert coordinate) finite.

use nalgebra::DMatrix;

use crate::design::DesignMatrix;
use crate::error::{GaspError, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    PowerExponential,
    Matern,
}

/// A one-dimensional isotropic correlation function with fixed roughness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel1D {
    family: KernelFamily,
    roughness: f64,
}

impl Kernel1D {
    /// `exp{-(d/γ)^α}` with `α ∈ (0, 2]`.
    pub fn power_exponential(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(GaspError::Domain(format!(
                "power-exponential roughness must lie in (0, 2], got {alpha}"
            )));
        }
        Ok(Self {
            family: KernelFamily::PowerExponential,
            roughness: alpha,
        })
    }

    /// Matérn with half-integer roughness 1/2, 3/2 or 5/2 (closed forms).
    pub fn matern(alpha: f64) -> Result<Self> {
        if ![0.5, 1.5, 2.5].contains(&alpha) {
            return Err(GaspError::Domain(format!(
                "Matérn roughness must be one of 0.5, 1.5, 2.5, got {alpha}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Matern,
            roughness: alpha,
        })
    }

    pub fn matern_5_2() -> Self {
        Self {
            family: KernelFamily::Matern,
            roughness: 2.5,
        }
    }

    /// Gaussian correlation (power exponential with `α = 2`).
    pub fn gaussian() -> Self {
        Self {
            family: KernelFamily::PowerExponential,
            roughness: 2.0,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn roughness(&self) -> f64 {
        self.roughness
    }

    /// Correlation at scaled distance `r ≥ 0` together with `r·c'(r)`.
    #[inline]
    pub(crate) fn eval_scaled(&self, r: f64) -> (f64, f64) {
        if r == 0.0 {
            return (1.0, 0.0);
        }
        match self.family {
            KernelFamily::PowerExponential => {
                let u = r.powf(self.roughness);
                let c = (-u).exp();
                (c, -self.roughness * u * c)
            }
            KernelFamily::Matern => {
                if self.roughness == 2.5 {
                    let s = SQRT5 * r;
                    let e = (-s).exp();
                    ((1.0 + s + s * s / 3.0) * e, -s * s * (1.0 + s) / 3.0 * e)
                } else if self.roughness == 1.5 {
                    let s = SQRT3 * r;
                    let e = (-s).exp();
                    ((1.0 + s) * e, -s * s * e)
                } else {
                    let e = (-r).exp();
                    (e, -r * e)
                }
            }
        }
    }

    /// `c(d)` for distance `d` and range `γ`.
    pub fn corr(&self, d: f64, gamma: f64) -> Result<f64> {
        check_distance(d)?;
        if !(gamma > 0.0) {
            return Err(GaspError::Domain(format!("range parameter must be positive, got {gamma}")));
        }
        if gamma.is_infinite() {
            return Ok(1.0);
        }
        Ok(self.eval_scaled(d / gamma).0)
    }

    /// `∂c/∂γ` at distance `d` and range `γ`.
    pub fn dcorr_dgamma(&self, d: f64, gamma: f64) -> Result<f64> {
        check_distance(d)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(GaspError::Domain(format!("range parameter must be positive and finite, got {gamma}")));
        }
        let (_, rdc) = self.eval_scaled(d / gamma);
        Ok(-rdc / gamma)
    }
}

fn check_distance(d: f64) -> Result<()> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(GaspError::Domain(format!("distance must be finite and non-negative, got {d}")));
    }
    Ok(())
}

/// Free-function form of [`Kernel1D::corr`].
pub fn corr1d(kernel: &Kernel1D, d: f64, gamma: f64) -> Result<f64> {
    kernel.corr(d, gamma)
}

/// One kernel per input coordinate; the full correlation is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    kernels: Vec<Kernel1D>,
}

impl CorrelationSpec {
    pub fn new(kernels: Vec<Kernel1D>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(GaspError::Config("correlation spec needs at least one coordinate".into()));
        }
        Ok(Self { kernels })
    }

    pub fn uniform(kernel: Kernel1D, dim: usize) -> Result<Self> {
        Self::new(vec![kernel; dim])
    }

    pub fn dim(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[Kernel1D] {
        &self.kernels
    }
}

/// How the per-coordinate range parameters are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// Range `γ_l`.
    Gamma,
    /// Log inverse range `ξ_l = log(1/γ_l)`.
    Xi,
    /// Inverse range `β_l = 1/γ_l`.
    Beta,
}

impl Parameterization {
    pub fn name(&self) -> &'static str {
        match self {
            Parameterization::Gamma => "gamma",
            Parameterization::Xi => "xi",
            Parameterization::Beta => "beta",
        }
    }
}

impl std::str::FromStr for Parameterization {
    type Err = GaspError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Parameterization::Gamma),
            "xi" => Ok(Parameterization::Xi),
            "beta" => Ok(Parameterization::Beta),
            other => Err(GaspError::Config(format!("unknown parameterization '{other}'"))),
        }
    }
}

/// Range parameters in one of the three parameterizations.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeParams {
    values: Vec<f64>,
    param: Parameterization,
}

impl RangeParams {
    pub fn new(values: Vec<f64>, param: Parameterization) -> Result<Self> {
        if values.is_empty() {
            return Err(GaspError::Config("range parameters must be non-empty".into()));
        }
        for &v in &values {
            let ok = match param {
                Parameterization::Xi => v.is_finite(),
                Parameterization::Gamma => v >= 0.0 && !v.is_nan(),
                Parameterization::Beta => v >= 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(GaspError::Domain(format!(
                    "invalid {} value {v}",
                    param.name()
                )));
            }
        }
        Ok(Self { values, param })
    }

    pub fn gamma(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Parameterization::Gamma)
    }

    pub fn xi(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Parameterization::Xi)
    }

    pub fn beta(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Parameterization::Beta)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn parameterization(&self) -> Parameterization {
        self.param
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inverse ranges `β_l`.
    pub fn to_beta(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| match self.param {
                Parameterization::Beta => v,
                Parameterization::Gamma => 1.0 / v,
                Parameterization::Xi => v.exp(),
            })
            .collect()
    }

    pub fn to_gamma(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| match self.param {
                Parameterization::Gamma => v,
                Parameterization::Beta => 1.0 / v,
                Parameterization::Xi => (-v).exp(),
            })
            .collect()
    }

    pub fn to_xi(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| match self.param {
                Parameterization::Xi => v,
                Parameterization::Beta => v.ln(),
                Parameterization::Gamma => -v.ln(),
            })
            .collect()
    }

    pub fn convert(&self, to: Parameterization) -> Result<RangeParams> {
        let values = match to {
            Parameterization::Gamma => self.to_gamma(),
            Parameterization::Beta => self.to_beta(),
            Parameterization::Xi => self.to_xi(),
        };
        RangeParams::new(values, to)
    }
}

/// Per-coordinate absolute distance matrices `|x_il − x_jl|`.
#[derive(Debug, Clone)]
pub struct Distances {
    per_coord: Vec<DMatrix<f64>>,
}

impl Distances {
    pub fn new(design: &DesignMatrix) -> Self {
        let n = design.nrows();
        let per_coord = (0..design.dim())
            .map(|l| DMatrix::from_fn(n, n, |i, j| (design.get(i, l) - design.get(j, l)).abs()))
            .collect();
        Self { per_coord }
    }

    pub fn n(&self) -> usize {
        self.per_coord.first().map(|m| m.nrows()).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.per_coord.len()
    }

    pub fn coord(&self, l: usize) -> &DMatrix<f64> {
        &self.per_coord[l]
    }
}

fn check_dims(spec: &CorrelationSpec, p: usize, params: &RangeParams) -> Result<()> {
    if spec.dim() != p {
        return Err(GaspError::DimensionMismatch {
            what: "correlation spec vs design columns",
            expected: p,
            got: spec.dim(),
        });
    }
    if params.len() != p {
        return Err(GaspError::DimensionMismatch {
            what: "range parameters vs design columns",
            expected: p,
            got: params.len(),
        });
    }
    Ok(())
}

/// Product correlation matrix from precomputed distances, with an optional
/// derivative of every entry with respect to each coordinate's parameter in
/// the active parameterization.
pub(crate) fn corr_with_derivs(
    spec: &CorrelationSpec,
    dist: &Distances,
    params: &RangeParams,
    want_derivs: bool,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    check_dims(spec, dist.dim(), params)?;
    let n = dist.n();
    let p = dist.dim();
    let beta = params.to_beta();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(GaspError::Domain("range parameters must be strictly positive".into()));
    }
    let param = params.parameterization();
    let mut r = DMatrix::<f64>::identity(n, n);
    let mut dr: Vec<DMatrix<f64>> = if want_derivs {
        vec![DMatrix::zeros(n, n); p]
    } else {
        Vec::new()
    };
    let mut c = vec![0.0; p];
    let mut dc = vec![0.0; p];
    let mut prefix = vec![1.0; p + 1];
    let mut suffix = vec![1.0; p + 1];
    for j in 0..n {
        for i in (j + 1)..n {
            for l in 0..p {
                let d = dist.coord(l)[(i, j)];
                let s = d * beta[l];
                let (cv, rdc) = spec.kernels[l].eval_scaled(s);
                c[l] = cv;
                if want_derivs {
                    dc[l] = match param {
                        Parameterization::Xi => rdc,
                        Parameterization::Gamma => -rdc * beta[l],
                        Parameterization::Beta => {
                            if beta[l] > 0.0 {
                                rdc / beta[l]
                            } else {
                                beta_zero_slope(&spec.kernels[l], d)
                            }
                        }
                    };
                }
            }
            for l in 0..p {
                prefix[l + 1] = prefix[l] * c[l];
            }
            for l in (0..p).rev() {
                suffix[l] = suffix[l + 1] * c[l];
            }
            let v = prefix[p];
            r[(i, j)] = v;
            r[(j, i)] = v;
            if want_derivs {
                for l in 0..p {
                    let g = prefix[l] * suffix[l + 1] * dc[l];
                    dr[l][(i, j)] = g;
                    dr[l][(j, i)] = g;
                }
            }
        }
    }
    Ok((r, dr))
}

/// `∂c/∂β` at `β = 0`, i.e. `d·c'(0)`.
fn beta_zero_slope(kernel: &Kernel1D, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    match kernel.family() {
        KernelFamily::Matern if kernel.roughness() == 0.5 => -d,
        KernelFamily::Matern => 0.0,
        KernelFamily::PowerExponential => {
            let a = kernel.roughness();
            if a > 1.0 {
                0.0
            } else if a == 1.0 {
                -d
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Product correlation matrix `R = R_1 ∘ … ∘ R_px`.
pub fn corr_matrix(
    spec: &CorrelationSpec,
    design: &DesignMatrix,
    params: &RangeParams,
) -> Result<DMatrix<f64>> {
    check_dims(spec, design.dim(), params)?;
    let dist = Distances::new(design);
    Ok(corr_with_derivs(spec, &dist, params, false)?.0)
}

/// `∂R/∂θ_l`, with `θ_l` the coordinate's value in the parameterization of `params`.
pub fn corr_matrix_deriv(
    spec: &CorrelationSpec,
    design: &DesignMatrix,
    params: &RangeParams,
    l: usize,
) -> Result<DMatrix<f64>> {
    check_dims(spec, design.dim(), params)?;
    if l >= design.dim() {
        return Err(GaspError::DimensionMismatch {
            what: "coordinate index",
            expected: design.dim(),
            got: l,
        });
    }
    let dist = Distances::new(design);
    let (_, mut dr) = corr_with_derivs(spec, &dist, params, true)?;
    Ok(dr.swap_remove(l))
}

/// Correlations between new points (rows of `x`) and the design, `m × n`.
pub fn cross_corr(
    spec: &CorrelationSpec,
    x: &DMatrix<f64>,
    design: &DesignMatrix,
    params: &RangeParams,
) -> Result<DMatrix<f64>> {
    check_dims(spec, design.dim(), params)?;
    if x.ncols() != design.dim() {
        return Err(GaspError::DimensionMismatch {
            what: "new input columns",
            expected: design.dim(),
            got: x.ncols(),
        });
    }
    let beta = params.to_beta();
    let n = design.nrows();
    let mut out = DMatrix::zeros(x.nrows(), n);
    for a in 0..x.nrows() {
        for i in 0..n {
            let mut v = 1.0;
            for (l, k) in spec.kernels.iter().enumerate() {
                let d = (x[(a, l)] - design.get(i, l)).abs();
                v *= k.eval_scaled(d * beta[l]).0;
            }
            out[(a, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma as gamma_fn;

    /// `K_ν(z) = ∫_0^∞ exp(−z cosh t) cosh(νt) dt`, trapezoid on a fine grid.
    fn bessel_k(nu: f64, z: f64) -> f64 {
        let h = 1e-3;
        let mut s = 0.5 * (-z).exp();
        let mut t: f64 = h;
        loop {
            let v = (-z * t.cosh()).exp() * (nu * t).cosh();
            s += v;
            if v < 1e-300 || t > 50.0 {
                break;
            }
            t += h;
        }
        s * h
    }

    fn matern_bessel(nu: f64, d: f64, gamma: f64) -> f64 {
        let z = (2.0 * nu).sqrt() * d / gamma;
        2f64.powf(1.0 - nu) / gamma_fn(nu) * z.powf(nu) * bessel_k(nu, z)
    }

    #[test]
    fn zero_distance_is_one() {
        let k = Kernel1D::power_exponential(1.9).unwrap();
        assert_eq!(k.corr(0.0, 0.7).unwrap(), 1.0);
        assert_eq!(Kernel1D::matern_5_2().corr(0.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn matern_tail_vanishes() {
        assert!(Kernel1D::matern_5_2().corr(1e6, 1.0).unwrap() < 1e-12);
    }

    #[test]
    fn matern_closed_forms_match_bessel_oracle() {
        let want = (1.0 + SQRT5 + 5.0 / 3.0) * (-SQRT5).exp();
        let got = Kernel1D::matern_5_2().corr(1.0, 1.0).unwrap();
        assert!((got - want).abs() < 1e-15);
        for &nu in &[0.5, 1.5, 2.5] {
            let k = Kernel1D::matern(nu).unwrap();
            for &(d, g) in &[(1.0, 1.0), (0.3, 0.7), (2.0, 0.5), (0.05, 1.3)] {
                let oracle = matern_bessel(nu, d, g);
                let v = k.corr(d, g).unwrap();
                assert!((v - oracle).abs() < 1e-9, "nu={nu} d={d} g={g}: {v} vs {oracle}");
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let k = Kernel1D::matern_5_2();
        assert!(k.corr(-1.0, 1.0).is_err());
        assert!(k.corr(f64::NAN, 1.0).is_err());
        assert!(k.corr(1.0, 0.0).is_err());
        assert!(Kernel1D::power_exponential(2.1).is_err());
        assert!(Kernel1D::power_exponential(0.0).is_err());
        assert!(Kernel1D::matern(2.0).is_err());
    }

    #[test]
    fn monotone_in_distance() {
        for k in [Kernel1D::matern_5_2(), Kernel1D::power_exponential(1.9).unwrap(), Kernel1D::matern(0.5).unwrap()] {
            let mut prev = 1.0;
            for i in 0..200 {
                let c = k.corr(i as f64 * 0.05, 0.8).unwrap();
                assert!(c <= prev && c > 0.0 || c == 0.0);
                prev = c;
            }
        }
    }

    #[test]
    fn dcorr_dgamma_matches_central_difference() {
        for k in [Kernel1D::matern_5_2(), Kernel1D::matern(1.5).unwrap(), Kernel1D::power_exponential(1.9).unwrap()] {
            for &(d, g) in &[(0.3, 0.4), (1.0, 2.0), (0.05, 0.1)] {
                let h = 1e-6 * g;
                let fd = (k.corr(d, g + h).unwrap() - k.corr(d, g - h).unwrap()) / (2.0 * h);
                let an = k.dcorr_dgamma(d, g).unwrap();
                assert!((fd - an).abs() <= 1e-7 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn parameterization_round_trip() {
        let p = RangeParams::gamma(vec![0.3, 2.0, 1e-3]).unwrap();
        let back = p.convert(Parameterization::Beta).unwrap().convert(Parameterization::Gamma).unwrap();
        for (a, b) in p.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
        let xi = p.convert(Parameterization::Xi).unwrap();
        assert!((xi.values()[1] + 2f64.ln()).abs() < 1e-15);
        assert!(RangeParams::beta(vec![-1.0]).is_err());
    }

    fn design_1d(xs: &[f64]) -> DesignMatrix {
        DesignMatrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_rows_give_all_ones() {
        let d = DesignMatrix::from_rows(&[vec![0.2, 0.4], vec![0.2, 0.4]]).unwrap();
        let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), 2).unwrap();
        let r = corr_matrix(&spec, &d, &RangeParams::gamma(vec![0.1, 0.2]).unwrap()).unwrap();
        assert!(r.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn product_matches_per_coordinate_hadamard() {
        let d = DesignMatrix::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.2], vec![0.7, 0.6], vec![0.95, 0.05]]).unwrap();
        let spec = CorrelationSpec::new(vec![Kernel1D::matern_5_2(), Kernel1D::power_exponential(1.9).unwrap()]).unwrap();
        let g = RangeParams::gamma(vec![0.3, 0.6]).unwrap();
        let r = corr_matrix(&spec, &d, &g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut v = 1.0;
                for l in 0..2 {
                    let dd = (d.get(i, l) - d.get(j, l)).abs();
                    v *= spec.kernels()[l].corr(dd, g.values()[l]).unwrap();
                }
                assert!((r[(i, j)] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tiny_ranges_give_near_identity() {
        let d = design_1d(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap();
        let r = corr_matrix(&spec, &d, &RangeParams::gamma(vec![1e-8]).unwrap()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(r[(i, j)] < 1e-10);
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let d = design_1d(&[0.05, 0.21, 0.48, 0.66, 0.93]);
        let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap();
        for param in [Parameterization::Gamma, Parameterization::Xi, Parameterization::Beta] {
            let base = RangeParams::gamma(vec![0.4]).unwrap().convert(param).unwrap();
            let v = base.values()[0];
            let h = 1e-5 * v.abs().max(1.0);
            let up = RangeParams::new(vec![v + h], param).unwrap();
            let dn = RangeParams::new(vec![v - h], param).unwrap();
            let fd = (corr_matrix(&spec, &d, &up).unwrap() - corr_matrix(&spec, &d, &dn).unwrap()) / (2.0 * h);
            let an = corr_matrix_deriv(&spec, &d, &base, 0).unwrap();
            for i in 0..5 {
                assert_eq!(an[(i, i)], 0.0);
            }
            let rel = (&fd - &an).amax() / an.amax();
            assert!(rel < 1e-6, "{param:?}: rel {rel}");
        }
    }

    #[test]
    fn beta_derivative_is_chain_rule_of_gamma_derivative() {
        let d = design_1d(&[0.0, 0.3, 0.35, 0.8]);
        let spec = CorrelationSpec::uniform(Kernel1D::power_exponential(1.9).unwrap(), 1).unwrap();
        let g = RangeParams::gamma(vec![0.45]).unwrap();
        let dg = corr_matrix_deriv(&spec, &d, &g, 0).unwrap();
        let db = corr_matrix_deriv(&spec, &d, &g.convert(Parameterization::Beta).unwrap(), 0).unwrap();
        let gam = 0.45f64;
        for (a, b) in db.iter().zip(dg.iter()) {
            assert!((a + gam * gam * b).abs() < 1e-12);
        }
    }
}
