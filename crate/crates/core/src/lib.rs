//! Robust Gaussian stochastic process (GaSP) emulation, Bayesian calibration
//! with a GaSP discrepancy, and inert-input screening, built around the
//! jointly robust prior and the reference prior.

pub mod bench;
pub mod calibrate;
pub mod design;
pub mod fit;
pub mod error;
pub mod kernels;
pub mod model;
mod optim;
pub mod priors;
pub mod screen;

pub use design::DesignMatrix;
pub use error::{ErrorClass, GaspError, Result};
pub use kernels::{corr1d, corr_matrix, corr_matrix_deriv, CorrelationSpec, Kernel1D, KernelFamily, Parameterization, RangeParams};
pub use model::{GaspModel, LikelihoodState, MeanBasis, PredictiveDistribution};
pub use priors::{jr_default_params, jr_log_density, jr_log_density_grad, jr_moments, reference_log_density, JrContext, JrParams, PriorKind, PriorSpec};
pub use fit::{fit_mode, log_posterior, log_posterior_grad, profile_timings, robustness_check, FitConfig, FitResult, FitTrace, Robustness, Timings};
pub use calibrate::{calibrate_mle, predict_calibrated, run_mcmc, CalibrationProblem, ComputerModel, McmcConfig, PosteriorChain, PredictionMode, ThetaPrior};
