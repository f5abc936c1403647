//! Hypothesis tests built on linear spectral statistics of high-dimensional
//! sample correlation matrices.
//!
//! The library covers the full pipeline: correlation spectra
//! ([`matrix_core`]), the Marčenko–Pastur limit and its Stieltjes
//! transforms ([`mp_law`]), contour-integral evaluation of the CLT mean and
//! covariance of the centered statistic ([`clt_engine`]), the test
//! statistics and decisions ([`lss_test`]), and a seeded Monte Carlo
//! harness for size/power studies ([`dgp_sim`]).

pub mod clt_engine;
pub mod dgp_sim;
pub mod error;
pub mod matrix_core;
pub mod mp_law;
pub mod quadrature;

pub use clt_engine::{
    asymptotic_covariance, asymptotic_mean, contour_lss_identity, default_contour,
    estimate_kappa_psi, inner_contour, CaseKind, CltMoments, ContourSpec, MomentBasis,
    MomentParams, MomentSourceKind, PlugInSource, StieltjesSource,
};
pub use dgp_sim::{generate, run_experiment, CellResult, DgpKind, DgpSpec, SimulationReport};
pub use error::{Error, Result};
pub use lss_test::{
    factor_loading_test, factor_test, independence_test, lss_statistic,
    specific_characteristic_test, standardize, TestFunction, TestKind, TestReport,
};
pub use matrix_core::{
    companion_resolvent_form, correlation_gram, correlation_matrix, esd_eval,
    CorrelationSpectrum, DataMatrix,
};
pub use mp_law::{mp_density, mp_integral, stieltjes, MpModel, StieltjesPair};
