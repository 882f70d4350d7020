//! Benchmark test functions, maximin Latin hypercube designs and the
//! emulation experiment driver.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use std::sync::Arc;

use crate::calibrate::{
    calibrate_mle, calibration_metrics, predict_calibrated, predict_mle, run_mcmc, CalibratedPrediction,
    CalibrationProblem, ComputerModel, McmcConfig, PredictionMode, ThetaPrior,
};
use crate::design::DesignMatrix;
use crate::error::{GaspError, Result};
use crate::fit::{fit_mode, FitConfig};
use crate::kernels::{CorrelationSpec, Kernel1D};
use crate::model::{GaspModel, MeanBasis};
use crate::priors::{jr_default_params, JrContext, PriorKind, PriorSpec};

/// Benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestFunction {
    /// Branin-type function on `[0,1]²`.
    Ex1I,
    /// Curved function on `[0,1]³`.
    Ex1II,
    /// `2exp{sin[0.9⁸(x₁+0.48)⁸]} + x₂x₃ + x₄` on `[0,1]⁴`.
    Ex1III,
    /// Friedman function on `[0,1]⁵`.
    Ex1IV,
    /// Borehole function.
    Ex1V,
    /// Four equal linear signals plus six noise inputs, noise sd 0.05.
    Ex2I,
    /// Eight halving linear signals plus two noise inputs, noise sd 0.05.
    Ex2II,
    /// Two signals out of seven, noise sd 0.3.
    Ex3I,
    /// Three signals out of six, noise sd 0.05.
    Ex3II,
    /// Four signals out of eight, noise sd 0.15.
    Ex3III,
    /// Five signals out of ten, noise sd 0.2.
    Ex3IV,
    /// Field process `3.5e^{−1.7x} + 1.5` on `[0,3]`, noise sd 0.3.
    Ex4,
}

const BOREHOLE: [(f64, f64); 8] = [
    (0.05, 0.15),
    (100.0, 50000.0),
    (63070.0, 115600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12045.0),
];

fn curved(x: &[f64]) -> f64 {
    4.0 * (x[0] - 2.0 + 8.0 * x[1] - 8.0 * x[1] * x[1]).powi(2)
        + (3.0 - 4.0 * x[1]).powi(2)
        + 16.0 * (x[2] + 1.0).sqrt() * (2.0 * x[2] - 1.0).powi(2)
}

fn friedman(x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

impl TestFunction {
    pub const ALL: [TestFunction; 12] = [
        TestFunction::Ex1I,
        TestFunction::Ex1II,
        TestFunction::Ex1III,
        TestFunction::Ex1IV,
        TestFunction::Ex1V,
        TestFunction::Ex2I,
        TestFunction::Ex2II,
        TestFunction::Ex3I,
        TestFunction::Ex3II,
        TestFunction::Ex3III,
        TestFunction::Ex3IV,
        TestFunction::Ex4,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            TestFunction::Ex1I => "ex1-i",
            TestFunction::Ex1II => "ex1-ii",
            TestFunction::Ex1III => "ex1-iii",
            TestFunction::Ex1IV => "ex1-iv",
            TestFunction::Ex1V => "ex1-v",
            TestFunction::Ex2I => "ex2-i",
            TestFunction::Ex2II => "ex2-ii",
            TestFunction::Ex3I => "ex3-i",
            TestFunction::Ex3II => "ex3-ii",
            TestFunction::Ex3III => "ex3-iii",
            TestFunction::Ex3IV => "ex3-iv",
            TestFunction::Ex4 => "ex4",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Ex1I => 2,
            TestFunction::Ex1II => 3,
            TestFunction::Ex1III => 4,
            TestFunction::Ex1IV => 5,
            TestFunction::Ex1V => 8,
            TestFunction::Ex2I | TestFunction::Ex2II | TestFunction::Ex3IV => 10,
            TestFunction::Ex3I => 7,
            TestFunction::Ex3II => 6,
            TestFunction::Ex3III => 8,
            TestFunction::Ex4 => 1,
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            TestFunction::Ex1V => BOREHOLE.to_vec(),
            TestFunction::Ex4 => vec![(0.0, 3.0)],
            _ => vec![(0.0, 1.0); self.dim()],
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            TestFunction::Ex2I | TestFunction::Ex2II | TestFunction::Ex3II => 0.05,
            TestFunction::Ex3I | TestFunction::Ex4 => 0.3,
            TestFunction::Ex3III => 0.15,
            TestFunction::Ex3IV => 0.2,
            _ => 0.0,
        }
    }

    /// Indices of the inputs that affect the output.
    pub fn signals(&self) -> Vec<usize> {
        match self {
            TestFunction::Ex2I => (0..4).collect(),
            TestFunction::Ex2II => (0..8).collect(),
            TestFunction::Ex3I => vec![0, 1],
            TestFunction::Ex3II => vec![0, 1, 2],
            TestFunction::Ex3III => (0..4).collect(),
            TestFunction::Ex3IV => (0..5).collect(),
            _ => (0..self.dim()).collect(),
        }
    }

    /// Noise-free value.
    pub fn eval(&self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            TestFunction::Ex1I => {
                let a = x[1] - 5.1 * x[0] * x[0] / (4.0 * PI * PI) + 5.0 * x[0] / PI - 6.0;
                a * a + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x[0].cos() + 10.0
            }
            TestFunction::Ex1II | TestFunction::Ex3II => curved(x),
            TestFunction::Ex1III => {
                2.0 * (0.9f64.powi(8) * (x[0] + 0.48).powi(8)).sin().exp() + x[1] * x[2] + x[3]
            }
            TestFunction::Ex1IV | TestFunction::Ex3IV => friedman(x),
            TestFunction::Ex1V => {
                let l = (x[1] / x[0]).ln();
                2.0 * PI * x[2] * (x[3] - x[5])
                    / (l * (1.0 + 2.0 * x[6] * x[2] / (l * x[0] * x[0] * x[7]) + x[2] / x[4]))
            }
            TestFunction::Ex2I => 0.2 * (x[0] + x[1] + x[2] + x[3]),
            TestFunction::Ex2II => (0..8).map(|i| 0.2 / 2f64.powi(i as i32) * x[i]).sum(),
            TestFunction::Ex3I => {
                ((30.0 + 5.0 * x[0] * (5.0 * x[0]).sin()) * (4.0 + (-5.0 * x[1]).exp()) - 100.0) / 6.0
            }
            TestFunction::Ex3III => 2.0 / 3.0 * (x[0] + x[1]).exp() - x[3] * x[2].sin() + x[2],
            TestFunction::Ex4 => 3.5 * (-1.7 * x[0]).exp() + 1.5,
        }
    }

    /// Value plus a Gaussian noise draw at the function's noise level.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let sd = self.noise_sd();
        let e = if sd > 0.0 {
            Normal::new(0.0, sd).expect("positive sd").sample(rng)
        } else {
            0.0
        };
        self.eval(x) + e
    }
}

impl std::str::FromStr for TestFunction {
    type Err = GaspError;
    fn from_str(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace('_', "-");
        TestFunction::ALL
            .iter()
            .find(|f| f.id() == k)
            .copied()
            .ok_or_else(|| GaspError::Config(format!("unknown test case '{s}'")))
    }
}

/// Derived per-replicate seed (splitmix64 step).
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(replicate.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn min_pairwise_sq(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..points.ncols()).map(|l| (points[(i, l)] - points[(j, l)]).powi(2)).sum();
            best = best.min(d);
        }
    }
    best
}

fn random_lhd<R: Rng>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for l in 0..p {
        perm.shuffle(rng);
        for i in 0..n {
            m[(i, l)] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    m
}

/// Latin hypercube on `[0,1]^p` maximizing the minimum pairwise distance
/// over `n_candidates` random candidates.
pub fn maximin_lhd(n: usize, p: usize, seed: u64, n_candidates: usize) -> Result<DesignMatrix> {
    if n < 2 || p == 0 {
        return Err(GaspError::Config(format!("maximin LHD needs n ≥ 2 and p ≥ 1, got n = {n}, p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..n_candidates.max(1) {
        let m = random_lhd(n, p, &mut rng);
        let d = min_pairwise_sq(&m);
        if best.as_ref().map_or(true, |(b, _)| d > *b) {
            best = Some((d, m));
        }
    }
    DesignMatrix::new(best.expect("at least one candidate").1)
}

/// `sqrt(Σ(y−ŷ)² / Σ(y−ȳ)²)` with `ȳ` the observed (training) output mean.
pub fn nrmse(truth: &[f64], pred: &[f64], observed_mean: f64) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(GaspError::DimensionMismatch {
            what: "predictions vs truth",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let num: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    let den: f64 = truth.iter().map(|t| (t - observed_mean).powi(2)).sum();
    if !(den > 0.0) {
        return Err(GaspError::Numerical("NRMSE denominator is zero (constant truth)".into()));
    }
    Ok((num / den).sqrt())
}

/// Mean of per-replicate NRMSE values.
pub fn avg_nrmse(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Default GaSP model for a benchmark function: Matérn 5/2, constant mean,
/// nugget enabled exactly when the function is noisy.
pub fn benchmark_model(f: TestFunction, design: DesignMatrix, y: Vec<f64>) -> Result<GaspModel> {
    let kernel = match f {
        TestFunction::Ex2I | TestFunction::Ex2II => Kernel1D::gaussian(),
        _ => Kernel1D::matern_5_2(),
    };
    let spec = CorrelationSpec::uniform(kernel, design.dim())?;
    GaspModel::new(design, y, MeanBasis::Constant, spec, f.noise_sd() > 0.0)
}

/// Training design and outputs for one replicate.
pub fn replicate_data(f: TestFunction, n: usize, seed: u64) -> Result<(DesignMatrix, Vec<f64>)> {
    let unit = maximin_lhd(n, f.dim(), seed, 100)?;
    let design = unit.scale_from_unit(&f.bounds())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_D47A);
    let y = (0..n).map(|i| f.sample(&design.row(i), &mut rng)).collect();
    Ok((design, y))
}

fn held_out(f: TestFunction, n_star: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0DD_BA11);
    let b = f.bounds();
    let x = DMatrix::from_fn(n_star, f.dim(), |_, l| b[l].0 + (b[l].1 - b[l].0) * rng.random::<f64>());
    let y = (0..n_star)
        .map(|i| f.eval(&x.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    (x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub nrmse: f64,
    pub fit_seconds: f64,
    pub n_factorizations: usize,
    pub robust: bool,
    /// `max |ŷ(x_i) − y_i| / sd(y)` over the training runs.
    pub train_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub case: TestFunction,
    pub prior: PriorKind,
    pub n: usize,
    pub n_star: usize,
    pub seed: u64,
    pub replicates: Vec<ReplicateRecord>,
    pub avg_nrmse: f64,
    pub mean_fit_seconds: f64,
}

impl ExperimentReport {
    /// Deterministic per-replicate results (timings are in [`Self::timings_csv`]).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("case,prior,n,n_star,replicate,seed,nrmse,n_factorizations,robust,train_residual\n");
        for r in &self.replicates {
            s.push_str(&format!(
                "{},{:?},{},{},{},{},{:?},{},{},{:?}\n",
                self.case.id(),
                self.prior,
                self.n,
                self.n_star,
                r.replicate,
                r.seed,
                r.nrmse,
                r.n_factorizations,
                r.robust,
                r.train_residual
            ));
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("case,prior,replicate,fit_seconds\n");
        for r in &self.replicates {
            s.push_str(&format!("{},{:?},{},{:?}\n", self.case.id(), self.prior, r.replicate, r.fit_seconds));
        }
        s
    }
}

/// Standard deviation with the `n−1` divisor.
pub fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Fit configuration used by the benchmarks for a prior kind.
pub fn benchmark_fit_config(model: &GaspModel, prior: PriorKind) -> Result<FitConfig> {
    match prior {
        PriorKind::Jr => FitConfig::jr_default(model),
        PriorKind::Reference => Ok(FitConfig::reference_default(model)),
    }
}

fn run_replicate(f: TestFunction, n: usize, n_star: usize, prior: PriorKind, rep: usize, seed: u64) -> Result<ReplicateRecord> {
    let (design, y) = replicate_data(f, n, seed)?;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sd = sample_sd(&y);
    let model = benchmark_model(f, design.clone(), y.clone())?;
    let cfg = benchmark_fit_config(&model, prior)?;
    let fit = fit_mode(&model, &cfg)?;
    let (xs, truth) = held_out(f, n_star, seed);
    let pred = fit.predict(&model, &xs)?;
    let train = fit.predict(&model, design.matrix())?;
    let train_residual = train
        .mean
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / sd;
    Ok(ReplicateRecord {
        replicate: rep,
        seed,
        nrmse: nrmse(&truth, &pred.mean, ybar)?,
        fit_seconds: fit.seconds,
        n_factorizations: fit.trace.n_factorizations,
        robust: fit.robustness.is_robust(),
        train_residual,
    })
}

/// Out-of-sample accuracy over `n_replicates` fresh maximin designs.
pub fn emulation_benchmark(
    f: TestFunction,
    n: usize,
    n_replicates: usize,
    prior: PriorKind,
    n_star: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let replicates: Vec<ReplicateRecord> = (0..n_replicates)
        .into_par_iter()
        .map(|r| run_replicate(f, n, n_star, prior, r, replicate_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    let nr: Vec<f64> = replicates.iter().map(|r| r.nrmse).collect();
    let avg = if nr.is_empty() { f64::NAN } else { avg_nrmse(&nr) };
    let mean_fit_seconds = replicates.iter().map(|r| r.fit_seconds).sum::<f64>() / replicates.len().max(1) as f64;
    Ok(ExperimentReport {
        case: f,
        prior,
        n,
        n_star,
        seed,
        replicates,
        avg_nrmse: avg,
        mean_fit_seconds,
    })
}

/// Table sizes: the run count used for each benchmark case.
pub fn default_sample_size(f: TestFunction) -> usize {
    match f {
        TestFunction::Ex1I => 30,
        TestFunction::Ex1II => 40,
        TestFunction::Ex1III => 50,
        TestFunction::Ex1IV => 60,
        TestFunction::Ex1V => 80,
        TestFunction::Ex2I | TestFunction::Ex2II => 54,
        TestFunction::Ex3I => 20,
        TestFunction::Ex3II | TestFunction::Ex3III | TestFunction::Ex3IV => 35,
        TestFunction::Ex4 => 30,
    }
}

/// Prior box for `θ` in the exponential-decay calibration example.
pub const EX4_THETA_BOUNDS: (f64, f64) = (0.0, 5.0);

/// The computer model of the calibration example, `5e^{−θx}`.
pub fn ex4_computer_model(x: &[f64], theta: &[f64]) -> f64 {
    5.0 * (-theta[0] * x[0]).exp()
}

/// Ten equispaced sites on `[0, 3]`, three noisy replicates each.
pub fn ex4_field_data(seed: u64) -> Result<(DesignMatrix, Vec<f64>)> {
    let f = TestFunction::Ex4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(30);
    let mut y = Vec::with_capacity(30);
    for i in 0..10 {
        let x = 3.0 * i as f64 / 9.0;
        for _ in 0..3 {
            rows.push(vec![x]);
            y.push(f.sample(&[x], &mut rng));
        }
    }
    Ok((DesignMatrix::from_rows(&rows)?, y))
}

/// Calibration problem for the example with a constant mean discrepancy,
/// Matérn 5/2 discrepancy and a nugget.
pub fn ex4_problem(design: DesignMatrix, y: Vec<f64>, prior: PriorKind) -> Result<CalibrationProblem> {
    let spec = match prior {
        PriorKind::Jr => PriorSpec::jr(jr_default_params(&design, JrContext::Calibration)?, true),
        PriorKind::Reference => PriorSpec::reference(true),
    };
    CalibrationProblem::new(
        design,
        y,
        ComputerModel::Function(Arc::new(ex4_computer_model)),
        ThetaPrior::uniform(vec![EX4_THETA_BOUNDS]),
        MeanBasis::Constant,
        CorrelationSpec::uniform(Kernel1D::matern_5_2(), 1)?,
        spec,
    )
}

/// 200 equispaced points on `[0, 5]`.
pub fn ex4_eval_points() -> DMatrix<f64> {
    DMatrix::from_fn(200, 1, |i, _| 5.0 * i as f64 / 199.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub method: String,
    pub nrmse_model: f64,
    pub nrmse_full: f64,
    /// Interval metrics for the model-plus-discrepancy predictor.
    pub p_ci: f64,
    pub l_ci: f64,
    pub median_theta: f64,
    /// `NaN` for the MLE row.
    pub median_xi: f64,
    pub accept_theta: f64,
    pub accept_cov: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub seed: u64,
    pub s: usize,
    pub s0: usize,
    pub rows: Vec<CalibrationRow>,
    /// `(method, mode, prediction)` on [`ex4_eval_points`].
    pub curves: Vec<(String, PredictionMode, CalibratedPrediction)>,
    /// Retained `ξ` draws, reference then JR.
    pub xi_draws: Vec<(String, Vec<f64>)>,
}

impl CalibrationReport {
    pub fn row(&self, method: &str) -> Option<&CalibrationRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,nrmse_model,nrmse_model_discrepancy,p_ci95,l_ci95,median_theta,median_xi,accept_theta,accept_cov\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                r.method,
                r.nrmse_model,
                r.nrmse_full,
                r.p_ci,
                r.l_ci,
                r.median_theta,
                r.median_xi,
                r.accept_theta,
                r.accept_cov
            ));
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("method,seconds\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:?}\n", r.method, r.seconds));
        }
        s
    }

    /// Retained `ξ` draws, one column per method.
    pub fn xi_csv(&self) -> String {
        let mut s = self.xi_draws.iter().map(|(m, _)| format!("xi_{m}")).collect::<Vec<_>>().join(",") + "\n";
        let len = self.xi_draws.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        for i in 0..len {
            let row: Vec<String> = self.xi_draws.iter().map(|(_, v)| v.get(i).map_or(String::new(), |x| format!("{x:?}"))).collect();
            s += &row.join(",");
            s.push('\n');
        }
        s
    }

    /// Long-format curves: `method,mode,x,mean,lower,upper,truth`.
    pub fn curves_csv(&self) -> String {
        let x = ex4_eval_points();
        let mut s = String::from("method,mode,x,mean,lower,upper,truth\n");
        for (m, mode, p) in &self.curves {
            for i in 0..x.nrows() {
                s.push_str(&format!(
                    "{m},{mode:?},{:?},{:?},{:?},{:?},{:?}\n",
                    x[(i, 0)],
                    p.mean[i],
                    p.lower[i],
                    p.upper[i],
                    TestFunction::Ex4.eval(&[x[(i, 0)]])
                ));
            }
        }
        s
    }
}

/// Reference-prior, JR-prior and MLE calibration on one simulated field data set.
pub fn calibration_benchmark(seed: u64, s: usize, s0: usize) -> Result<CalibrationReport> {
    let (design, y) = ex4_field_data(seed)?;
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let x = ex4_eval_points();
    let truth: Vec<f64> = (0..x.nrows()).map(|i| TestFunction::Ex4.eval(&[x[(i, 0)]])).collect();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut xi_draws = Vec::new();
    for (k, prior) in [PriorKind::Reference, PriorKind::Jr].into_iter().enumerate() {
        let name = match prior {
            PriorKind::Reference => "reference",
            PriorKind::Jr => "jr",
        };
        let start = std::time::Instant::now();
        let prob = ex4_problem(design.clone(), y.clone(), prior)?;
        let chain = run_mcmc(&prob, &McmcConfig::new(s, s0, replicate_seed(seed, k as u64 + 1)))?;
        let pm = predict_calibrated(&prob, &chain, &x, PredictionMode::ModelOnly, seed)?;
        let pf = predict_calibrated(&prob, &chain, &x, PredictionMode::ModelPlusDiscrepancy, seed)?;
        let mm = calibration_metrics(&pm, &truth, ybar)?;
        let mf = calibration_metrics(&pf, &truth, ybar)?;
        rows.push(CalibrationRow {
            method: name.into(),
            nrmse_model: mm.nrmse,
            nrmse_full: mf.nrmse,
            p_ci: mf.p_ci,
            l_ci: mf.l_ci,
            median_theta: chain.median_theta(0),
            median_xi: chain.median_xi(0),
            accept_theta: chain.accept_theta,
            accept_cov: chain.accept_cov,
            seconds: start.elapsed().as_secs_f64(),
        });
        xi_draws.push((name.to_string(), chain.retained().map(|i| chain.xi[i][0]).collect()));
        curves.push((name.to_string(), PredictionMode::ModelOnly, pm));
        curves.push((name.to_string(), PredictionMode::ModelPlusDiscrepancy, pf));
    }
    let start = std::time::Instant::now();
    let prob = ex4_problem(design, y, PriorKind::Jr)?;
    let mle = calibrate_mle(&prob)?;
    let pm = predict_mle(&prob, &mle, &x, PredictionMode::ModelOnly)?;
    let pf = predict_mle(&prob, &mle, &x, PredictionMode::ModelPlusDiscrepancy)?;
    let mm = calibration_metrics(&pm, &truth, ybar)?;
    let mf = calibration_metrics(&pf, &truth, ybar)?;
    rows.push(CalibrationRow {
        method: "mle".into(),
        nrmse_model: mm.nrmse,
        nrmse_full: mf.nrmse,
        p_ci: mf.p_ci,
        l_ci: mf.l_ci,
        median_theta: mle.theta[0],
        median_xi: f64::NAN,
        accept_theta: f64::NAN,
        accept_cov: f64::NAN,
        seconds: start.elapsed().as_secs_f64(),
    });
    curves.push(("mle".into(), PredictionMode::ModelOnly, pm));
    curves.push(("mle".into(), PredictionMode::ModelPlusDiscrepancy, pf));
    Ok(CalibrationReport {
        seed,
        s,
        s0,
        rows,
        curves,
        xi_draws,
    })
}
