//! Correlation and arrival-time histograms, and the fits run on them.

mod fits;
mod histogram;
mod lsq;

pub use fits::{
    fit_conversion_curve, fit_exponential_tail, fit_g2, fit_gaussian, initial_guess_g2,
    DecayFitParams, ExponentialTailFit, FitReport, FitResult, G2Fit, G2FitParams,
    GaussianFitParams, NamedParams, DEFAULT_LIFETIME_NS,
};
pub use histogram::{
    arrival_histogram, auto_correlation_histogram, cross_correlation_histogram, g2_curve_csv,
    normalize_g2, G2Point, Histogram,
};
pub use lsq::{damped_least_squares, DataPoint, LsqFit, LsqOptions};
