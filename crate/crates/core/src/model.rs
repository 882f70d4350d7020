//! The GaSP model: mean basis, marginal likelihood with the mean and variance
//! integrated out under the `1/σ²` prior, the predictive distribution, and the
//! expected Fisher information used by the reference prior.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::design::DesignMatrix;
use crate::error::{GaspError, Result};
use crate::kernels::{corr_with_derivs, cross_corr, CorrelationSpec, Distances, RangeParams};

/// Jitter levels tried (relative to the mean diagonal) when a Cholesky fails.
pub const JITTER_LEVELS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Mean basis functions `h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanBasis {
    /// `h(x) = 1`.
    Constant,
    /// `h(x) = (1, x_1, …, x_px)`.
    Linear,
    /// No mean term (`q = 0`).
    Zero,
}

impl MeanBasis {
    pub fn q(&self, dim: usize) -> usize {
        match self {
            MeanBasis::Constant => 1,
            MeanBasis::Linear => dim + 1,
            MeanBasis::Zero => 0,
        }
    }

    /// Basis matrix, one row per input row.
    pub fn matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.q(x.ncols());
        DMatrix::from_fn(x.nrows(), q, |i, t| match (self, t) {
            (_, 0) => 1.0,
            (MeanBasis::Linear, t) => x[(i, t - 1)],
            _ => unreachable!(),
        })
    }
}

impl std::str::FromStr for MeanBasis {
    type Err = GaspError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" | "const" => Ok(MeanBasis::Constant),
            "linear" => Ok(MeanBasis::Linear),
            "zero" | "none" => Ok(MeanBasis::Zero),
            other => Err(GaspError::Config(format!("unknown mean basis '{other}'"))),
        }
    }
}

/// Design, outputs, mean basis and correlation structure of one GaSP.
#[derive(Debug, Clone)]
pub struct GaspModel {
    design: DesignMatrix,
    y: DVector<f64>,
    basis: MeanBasis,
    h: DMatrix<f64>,
    spec: CorrelationSpec,
    nugget: bool,
    dist: Distances,
}

impl GaspModel {
    pub fn new(
        design: DesignMatrix,
        y: Vec<f64>,
        basis: MeanBasis,
        spec: CorrelationSpec,
        nugget: bool,
    ) -> Result<Self> {
        let n = design.nrows();
        if y.len() != n {
            return Err(GaspError::Data(format!(
                "design has {n} rows but output has {} values",
                y.len()
            )));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(GaspError::Data(format!("non-finite output value {v}")));
        }
        if spec.dim() != design.dim() {
            return Err(GaspError::DimensionMismatch {
                what: "correlation spec vs design columns",
                expected: design.dim(),
                got: spec.dim(),
            });
        }
        let h = basis.matrix(design.matrix());
        let q = h.ncols();
        if n <= q {
            return Err(GaspError::Data(format!(
                "need more runs than mean basis functions (n = {n}, q = {q})"
            )));
        }
        if q > 0 {
            let rank = h.clone().svd(false, false).rank(1e-10 * h.norm().max(1.0));
            if rank < q {
                return Err(GaspError::Rank(format!("mean basis has rank {rank} < q = {q}")));
            }
        }
        let dist = Distances::new(&design);
        Ok(Self {
            design,
            y: DVector::from_vec(y),
            basis,
            h,
            spec,
            nugget,
            dist,
        })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn basis(&self) -> &MeanBasis {
        &self.basis
    }

    pub fn basis_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn spec(&self) -> &CorrelationSpec {
        &self.spec
    }

    pub fn nugget_enabled(&self) -> bool {
        self.nugget
    }

    /// Same design and correlation structure, different outputs.
    pub fn with_outputs(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(GaspError::Data(format!(
                "design has {} rows but output has {} values",
                self.n(),
                y.len()
            )));
        }
        let mut m = self.clone();
        m.y = DVector::from_vec(y);
        Ok(m)
    }

    fn check_eta(&self, eta: f64) -> Result<f64> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(GaspError::Domain(format!("nugget must be finite and non-negative, got {eta}")));
        }
        Ok(if self.nugget { eta } else { 0.0 })
    }

    /// Correlation matrix and its derivatives (active parameterization).
    pub fn correlation(&self, params: &RangeParams, derivs: bool) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        corr_with_derivs(&self.spec, &self.dist, params, derivs)
    }

    /// Factorizes `C = R + ηI` and forms everything the likelihood needs.
    pub fn state(&self, params: &RangeParams, eta: f64) -> Result<LikelihoodState> {
        let (r, _) = self.correlation(params, false)?;
        self.state_from_corr(r, eta)
    }

    pub(crate) fn state_from_corr(&self, r: DMatrix<f64>, eta: f64) -> Result<LikelihoodState> {
        let eta = self.check_eta(eta)?;
        LikelihoodState::build(r, eta, &self.h, &self.y)
    }

    pub fn log_marginal_lik(&self, params: &RangeParams, eta: f64) -> Result<f64> {
        Ok(self.state(params, eta)?.log_marginal_lik())
    }

    /// Gradient of the log marginal likelihood. Components `0..p_x` are with
    /// respect to the range parameters in the parameterization of `params`;
    /// when the nugget is enabled a final component is with respect to `η`.
    pub fn log_marginal_lik_grad(&self, params: &RangeParams, eta: f64) -> Result<Vec<f64>> {
        let (r, dr) = self.correlation(params, true)?;
        let st = self.state_from_corr(r, eta)?;
        Ok(st.grad(&dr, self.nugget))
    }

    /// Value and gradient from one factorization.
    pub fn log_marginal_lik_with_grad(&self, params: &RangeParams, eta: f64) -> Result<(f64, Vec<f64>)> {
        let (r, dr) = self.correlation(params, true)?;
        let st = self.state_from_corr(r, eta)?;
        Ok((st.log_marginal_lik(), st.grad(&dr, self.nugget)))
    }

    /// Expected Fisher information `I*` (derivatives in the active
    /// parameterization; nugget row uses `∂C/∂η = I`).
    pub fn fisher_info(&self, params: &RangeParams, eta: f64) -> Result<DMatrix<f64>> {
        let (r, dr) = self.correlation(params, true)?;
        let st = self.state_from_corr(r, eta)?;
        Ok(st.fisher_info(&dr, self.nugget))
    }

    /// Predictive distribution of the (noise-free) output at new inputs.
    pub fn predict(&self, params: &RangeParams, eta: f64, new_inputs: &DMatrix<f64>) -> Result<PredictiveDistribution> {
        let st = self.state(params, eta)?;
        self.predict_with_state(&st, params, new_inputs)
    }

    pub fn predict_with_state(
        &self,
        st: &LikelihoodState,
        params: &RangeParams,
        new_inputs: &DMatrix<f64>,
    ) -> Result<PredictiveDistribution> {
        let rx = cross_corr(&self.spec, new_inputs, &self.design, params)?;
        let hx = self.basis.matrix(new_inputs);
        let n = self.n();
        let q = self.q();
        let dof = n - q;
        let resid = &self.y - &self.h * &st.theta_hat;
        let w = st.chol.solve(&resid);
        let sigma2 = st.s2 / dof as f64;
        let m = new_inputs.nrows();
        let mut mean = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        let mut extrapolated = Vec::with_capacity(m);
        let bounds = self.design.bounds();
        for a in 0..m {
            let r_a = rx.row(a).transpose();
            let h_a = hx.row(a).transpose();
            let mu = (h_a.transpose() * &st.theta_hat)[(0, 0)] + r_a.dot(&w);
            let cir = st.chol.solve(&r_a);
            let mut v = 1.0 - r_a.dot(&cir);
            if q > 0 {
                let u = &h_a - &st.cih.transpose() * &r_a;
                v += (u.transpose() * &st.htcih_inv * &u)[(0, 0)];
            }
            mean.push(mu);
            scale.push((sigma2 * v.max(0.0)).sqrt());
            extrapolated.push(
                (0..self.dim()).any(|l| new_inputs[(a, l)] < bounds[l].0 || new_inputs[(a, l)] > bounds[l].1),
            );
        }
        Ok(PredictiveDistribution {
            mean,
            scale,
            dof,
            extrapolated,
        })
    }

    /// Joint predictive mean and covariance (plug-in `σ̂²`, noise-free) at new inputs.
    pub fn predict_joint(&self, params: &RangeParams, eta: f64, new_inputs: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let st = self.state(params, eta)?;
        self.predict_joint_with_state(&st, params, new_inputs)
    }

    pub fn predict_joint_with_state(
        &self,
        st: &LikelihoodState,
        params: &RangeParams,
        new_inputs: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let rx = cross_corr(&self.spec, new_inputs, &self.design, params)?;
        let hx = self.basis.matrix(new_inputs);
        let new_design = DesignMatrix::new(new_inputs.clone())?;
        let rxx = cross_corr(&self.spec, new_inputs, &new_design, params)?;
        let resid = &self.y - &self.h * &st.theta_hat;
        let mean = &hx * &st.theta_hat + &rx * st.chol.solve(&resid);
        let cir = st.chol.solve(&rx.transpose());
        let mut cov = &rxx - &rx * &cir;
        if self.q() > 0 {
            let u = &hx - &rx * &st.cih;
            cov += &u * &st.htcih_inv * u.transpose();
        }
        cov = (&cov + cov.transpose()) * (0.5 * st.sigma2_hat());
        Ok((mean, cov))
    }
}

/// Student-t predictive marginals.
#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub dof: usize,
    /// Inputs outside the design's bounding box.
    pub extrapolated: Vec<bool>,
}

impl PredictiveDistribution {
    /// Central `level` credible interval per point.
    pub fn interval(&self, level: f64) -> (Vec<f64>, Vec<f64>) {
        let t = StudentsT::new(0.0, 1.0, self.dof as f64)
            .map(|d| d.inverse_cdf(0.5 + level / 2.0))
            .unwrap_or(1.959_963_984_540_054);
        let lo = self.mean.iter().zip(&self.scale).map(|(m, s)| m - t * s).collect();
        let hi = self.mean.iter().zip(&self.scale).map(|(m, s)| m + t * s).collect();
        (lo, hi)
    }
}

/// Everything derived from one factorization of `C`.
#[derive(Debug, Clone)]
pub struct LikelihoodState {
    pub(crate) chol: Cholesky<f64, Dyn>,
    /// `Q = C⁻¹ − C⁻¹H(HᵀC⁻¹H)⁻¹HᵀC⁻¹`.
    pub q_mat: DMatrix<f64>,
    /// `Q y`.
    pub qy: DVector<f64>,
    /// `S² = yᵀQy`.
    pub s2: f64,
    pub log_det_c: f64,
    pub log_det_htcih: f64,
    /// Generalized least squares estimate of the mean coefficients.
    pub theta_hat: DVector<f64>,
    pub(crate) cih: DMatrix<f64>,
    pub(crate) htcih_inv: DMatrix<f64>,
    /// Jitter added to the diagonal (0 when none was needed).
    pub jitter: f64,
    n: usize,
    q: usize,
}

/// Cholesky with the escalating jitter policy.
pub(crate) fn factorize(c: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(GaspError::Numerical("non-finite covariance entry".into()));
    }
    let n = c.nrows();
    let mean_diag = c.diagonal().sum() / n as f64;
    if let Some(ch) = Cholesky::new(c.clone()) {
        return Ok((ch, 0.0));
    }
    let mut tried = Vec::new();
    for &lvl in &JITTER_LEVELS {
        let j = lvl * mean_diag;
        tried.push(j);
        let mut cj = c.clone();
        for i in 0..n {
            cj[(i, i)] += j;
        }
        if let Some(ch) = Cholesky::new(cj) {
            return Ok((ch, j));
        }
    }
    Err(GaspError::SingularCovariance { jitters: tried })
}

impl LikelihoodState {
    pub(crate) fn build(mut c: DMatrix<f64>, eta: f64, h: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let n = c.nrows();
        let q = h.ncols();
        if eta > 0.0 {
            for i in 0..n {
                c[(i, i)] += eta;
            }
        }
        let (chol, jitter) = factorize(c)?;
        let log_det_c = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let c_inv = chol.inverse();
        let (q_mat, theta_hat, cih, htcih_inv, log_det_htcih) = if q > 0 {
            let cih = &c_inv * h;
            let m = h.transpose() * &cih;
            let m_chol = Cholesky::new(m.clone()).ok_or_else(|| {
                GaspError::Numerical("HᵀC⁻¹H is not positive definite".into())
            })?;
            let log_det_m = 2.0 * m_chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let m_inv = m_chol.inverse();
            let mut qm = &c_inv - &cih * &m_inv * cih.transpose();
            qm = (&qm + qm.transpose()) * 0.5;
            let theta = &m_inv * (cih.transpose() * y);
            (qm, theta, cih, m_inv, log_det_m)
        } else {
            (c_inv, DVector::zeros(0), DMatrix::zeros(n, 0), DMatrix::zeros(0, 0), 0.0)
        };
        let qy = &q_mat * y;
        let s2 = y.dot(&qy);
        let scale = y.dot(&chol.solve(y)).abs();
        if !s2.is_finite() || s2 < -1e-12 * scale {
            return Err(GaspError::Numerical(format!("residual quadratic form yᵀQy = {s2:e} is invalid")));
        }
        if !(s2 > 1e-12 * scale) {
            return Err(GaspError::DegenerateOutput(format!(
                "residual quadratic form yᵀQy = {s2:e} is zero; outputs are explained exactly by the mean basis"
            )));
        }
        Ok(Self {
            chol,
            q_mat,
            qy,
            s2,
            log_det_c,
            log_det_htcih,
            theta_hat,
            cih,
            htcih_inv,
            jitter,
            n,
            q,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// `−½log|C| − ½log|HᵀC⁻¹H| − ((n−q)/2)·log S²`.
    pub fn log_marginal_lik(&self) -> f64 {
        let dof = (self.n - self.q) as f64;
        -0.5 * self.log_det_c - 0.5 * self.log_det_htcih - 0.5 * dof * self.s2.ln()
    }

    /// `σ̂² = S²/(n−q)`.
    pub fn sigma2_hat(&self) -> f64 {
        self.s2 / (self.n - self.q) as f64
    }

    /// Solves `C x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn htcih_inv(&self) -> &DMatrix<f64> {
        &self.htcih_inv
    }

    /// `rᵀQr` for an arbitrary output vector.
    pub fn s2_for(&self, r: &DVector<f64>) -> f64 {
        r.dot(&(&self.q_mat * r))
    }

    /// Generalized least squares mean coefficients for an arbitrary output vector.
    pub fn theta_hat_for(&self, r: &DVector<f64>) -> DVector<f64> {
        if self.q == 0 {
            return DVector::zeros(0);
        }
        &self.htcih_inv * (self.cih.transpose() * r)
    }

    /// Log marginal likelihood of an arbitrary output vector under this covariance.
    pub fn log_marginal_lik_for(&self, r: &DVector<f64>) -> f64 {
        let dof = (self.n - self.q) as f64;
        -0.5 * self.log_det_c - 0.5 * self.log_det_htcih - 0.5 * dof * self.s2_for(r).ln()
    }

    pub(crate) fn grad(&self, dr: &[DMatrix<f64>], nugget: bool) -> Vec<f64> {
        let dof = (self.n - self.q) as f64;
        let mut g = Vec::with_capacity(dr.len() + usize::from(nugget));
        for d in dr {
            let tr = self.q_mat.component_mul(d).sum();
            let quad = self.qy.dot(&(d * &self.qy));
            g.push(-0.5 * tr + 0.5 * dof * quad / self.s2);
        }
        if nugget {
            let tr = self.q_mat.trace();
            let quad = self.qy.norm_squared();
            g.push(-0.5 * tr + 0.5 * dof * quad / self.s2);
        }
        g
    }

    pub(crate) fn fisher_info(&self, dr: &[DMatrix<f64>], nugget: bool) -> DMatrix<f64> {
        let mut w: Vec<DMatrix<f64>> = dr.iter().map(|d| d * &self.q_mat).collect();
        if nugget {
            w.push(self.q_mat.clone());
        }
        let k = w.len();
        let mut info = DMatrix::zeros(k + 1, k + 1);
        info[(0, 0)] = (self.n - self.q) as f64;
        for a in 0..k {
            let t = w[a].trace();
            info[(0, a + 1)] = t;
            info[(a + 1, 0)] = t;
            for b in a..k {
                // tr(W_a W_b) = Σ_ij W_a[i,j] W_b[j,i]
                let v = w[a].component_mul(&w[b].transpose()).sum();
                info[(a + 1, b + 1)] = v;
                info[(b + 1, a + 1)] = v;
            }
        }
        info
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel1D, Parameterization};

    fn model_1d(xs: &[f64], ys: &[f64], basis: MeanBasis, nugget: bool) -> GaspModel {
        let d = DesignMatrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        GaspModel::new(d, ys.to_vec(), basis, CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap(), nugget).unwrap()
    }

    #[test]
    fn q_annihilates_basis() {
        let xs = [0.0, 0.13, 0.3, 0.52, 0.7, 0.88, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| (6.0 * x).sin()).collect();
        let m = model_1d(&xs, &ys, MeanBasis::Linear, false);
        let st = m.state(&RangeParams::gamma(vec![0.4]).unwrap(), 0.0).unwrap();
        let qh = &st.q_mat * m.basis_matrix();
        assert!(qh.amax() < 1e-8 * st.q_mat.norm() * m.basis_matrix().norm());
        assert!(st.s2 >= 0.0);
        let eig = st.q_mat.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-8 * st.q_mat.norm());
    }

    #[test]
    fn location_and_scale_behaviour() {
        let xs = [0.0, 0.2, 0.45, 0.6, 0.8, 1.0];
        let ys = [1.0, 0.3, -0.2, 0.5, 1.4, 0.9];
        let g = RangeParams::gamma(vec![0.3]).unwrap();
        let base = model_1d(&xs, &ys, MeanBasis::Constant, false).log_marginal_lik(&g, 0.0).unwrap();
        let shifted: Vec<f64> = ys.iter().map(|v| v + 7.5).collect();
        let l2 = model_1d(&xs, &shifted, MeanBasis::Constant, false).log_marginal_lik(&g, 0.0).unwrap();
        assert!((base - l2).abs() < 1e-8);
        let s = 3.0f64;
        let scaled: Vec<f64> = ys.iter().map(|v| v * s).collect();
        let l3 = model_1d(&xs, &scaled, MeanBasis::Constant, false).log_marginal_lik(&g, 0.0).unwrap();
        assert!((l3 - (base - 5.0 * s.ln())).abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_difference_with_nugget() {
        let xs = [0.0, 0.15, 0.33, 0.5, 0.71, 0.9];
        let ys = [0.2, 0.9, 0.4, -0.3, 0.1, 0.8];
        let m = model_1d(&xs, &ys, MeanBasis::Constant, true);
        for param in [Parameterization::Gamma, Parameterization::Xi, Parameterization::Beta] {
            let p = RangeParams::gamma(vec![0.25]).unwrap().convert(param).unwrap();
            let eta = 0.05;
            let g = m.log_marginal_lik_grad(&p, eta).unwrap();
            let v = p.values()[0];
            let h = 1e-5 * v.abs().max(1.0);
            let f = |v: f64, e: f64| m.log_marginal_lik(&RangeParams::new(vec![v], param).unwrap(), e).unwrap();
            let fd0 = (f(v + h, eta) - f(v - h, eta)) / (2.0 * h);
            let he = 1e-6;
            let fd1 = (f(v, eta + he) - f(v, eta - he)) / (2.0 * he);
            assert!((g[0] - fd0).abs() < 1e-5 * fd0.abs().max(1e-3), "{param:?} {} {}", g[0], fd0);
            assert!((g[1] - fd1).abs() < 1e-5 * fd1.abs().max(1e-3), "{} {}", g[1], fd1);
        }
    }

    #[test]
    fn interpolates_and_reverts_to_mean() {
        let xs = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let ys = [0.0, 0.6, 0.9, 0.7, 0.1, -0.4];
        let m = model_1d(&xs, &ys, MeanBasis::Constant, false);
        let g = RangeParams::gamma(vec![0.3]).unwrap();
        let x_new = DMatrix::from_column_slice(3, 1, &[0.4, 0.8, 1e4]);
        let pred = m.predict(&g, 0.0, &x_new).unwrap();
        assert!((pred.mean[0] - 0.9).abs() < 1e-9);
        assert!((pred.mean[1] - 0.1).abs() < 1e-9);
        assert!(pred.scale[0] < 1e-6);
        let st = m.state(&g, 0.0).unwrap();
        assert!((pred.mean[2] - st.theta_hat[0]).abs() < 1e-6);
        assert!(pred.extrapolated[2] && !pred.extrapolated[0]);
        assert_eq!(pred.dof, 5);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let xs = [0.0, 0.3, 0.5, 0.9];
        let m = model_1d(&xs, &[2.0; 4], MeanBasis::Constant, false);
        let e = m.log_marginal_lik(&RangeParams::gamma(vec![0.3]).unwrap(), 0.0).unwrap_err();
        assert!(matches!(e, GaspError::DegenerateOutput(_)));
    }

    #[test]
    fn fisher_info_structure() {
        let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let ys = [0.1, 0.5, 0.2, 0.9, 0.4];
        let m = model_1d(&xs, &ys, MeanBasis::Constant, false);
        let g = RangeParams::gamma(vec![0.35]).unwrap();
        let info = m.fisher_info(&g, 0.0).unwrap();
        assert_eq!(info[(0, 0)], 4.0);
        assert!((&info - info.transpose()).amax() < 1e-12);
        let eig = info.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-8 * info.norm());
        // tr(Ṙ Q) computed as a Hadamard sum
        let (_, dr) = m.correlation(&g, true).unwrap();
        let st = m.state(&g, 0.0).unwrap();
        let had = dr[0].component_mul(&st.q_mat.transpose()).sum();
        assert!((had - info[(0, 1)]).abs() < 1e-10);
        // R ≈ I: traces vanish
        let tiny = m.fisher_info(&RangeParams::gamma(vec![1e-8]).unwrap(), 0.0).unwrap();
        assert!(tiny[(0, 1)].abs() < 1e-10);
    }

    #[test]
    fn rejects_mismatched_outputs() {
        let d = DesignMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let spec = CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1).unwrap();
        let e = GaspModel::new(d, vec![1.0, 2.0], MeanBasis::Constant, spec, false).unwrap_err();
        assert!(e.to_string().contains('3') && e.to_string().contains('2'));
    }
}
