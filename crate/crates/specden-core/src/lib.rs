//! Nonparametric spectral density estimation with penalized Whittle likelihood.
//!
//! This crate estimates log-spectra of stationary time series with periodic
//! smoothing splines, and time-varying log-spectra of locally stationary
//! series with a smoothing spline ANOVA decomposition. Smoothing parameters
//! are chosen by direct generalized maximum likelihood (GML) or generalized
//! approximate cross-validation (GACV); several reference methods (indirect
//! GML, the Pawitan–O'Sullivan risk criterion, and smoothing of bias-corrected
//! log-periodograms) are provided for benchmarking. Permutation tests assess
//! whether a locally stationary series is in fact stationary, and Bayesian
//! confidence bands quantify uncertainty of the fitted spectra.

pub mod error;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod periodogram;
pub mod selection;
pub mod simulate;
pub mod whittle;

pub use error::{Result, SpecdenError};
pub use kernels::{gram_matrix, GramKind, GramMatrix, KernelGrid};
pub use periodogram::{
    local_periodograms, normalize_series, periodogram, GridSpec, LocalPeriodogramGrid,
    PeriodogramSet, TimeSeries,
};
pub use whittle::{
    fit_reduced, fit_ssanova, fit_stationary, irpls_solve, ReducedFit, SsanovaFit, StationaryFit,
};
