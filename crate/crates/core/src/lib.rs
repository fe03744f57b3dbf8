//! Operator-scaled fractional Brownian motion: Hermite expansions of
//! nonlinear functionals, exact Gaussian sequence synthesis, partial-sum
//! approximations and verification statistics.

pub mod approx;
pub mod corr;
pub mod error;
pub mod gaussgen;
pub mod hermite;
pub mod linop;
pub mod ofbm;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod verify;

pub use crate::approx::{
    ensemble, ensemble_banded, partial_sum_path, reduced_path, tail_path, Band, EnsembleMeta, EnsembleSpec,
    PathEnsemble,
};
pub use corr::{
    check_condition_h, ofgn_model, table_model, white_model, ConditionHReport, CorrelationModel, ModelFamily, ModelSpec,
};
pub use error::{Error, Result};
pub use gaussgen::{empirical_corr, synthesize, GaussianSequence, Method, MethodChoice, SynthesisPlan};
pub use hermite::{extract_coeffs, hermite_rank, HermiteCoefficientTable, MultiIndex, NonlinearFunctional};
pub use linop::{mat_pow, LinearOperator, SpectralBounds};
pub use ofbm::{
    covariance, kernel_eval, oss_covariance_check, simulate, Kernel, OfbmSimulator, QuadConfig, SimConfig, SpectralSpec,
};
pub use stats::{
    cov_estimate, energy_distance, moment_ratio, tightness_exponent, whiten, CovEstimate, EnergyTest, MomentRatio,
    TightnessFit, VerificationReport,
};
pub use verify::{run_suite, CriterionOutcome, SuiteConfig};
