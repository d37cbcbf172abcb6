//! Source-device-independent quantum random number generation by homodyne
//! detection with a phase-randomized local oscillator: state and detector
//! models, the filtering chain, calibration, min-entropy bounds, Toeplitz
//! extraction, an attack laboratory and a statistical test battery.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix `f64`, which is what the pipeline uses.

// `!(x > 0.0)` is the idiom for rejecting NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// oracle constants in tests keep every digit they were computed with
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod attacklab;
pub mod calibration;
pub mod config;
pub mod detector;
pub mod dsp;
pub mod entropy;
pub mod error;
pub mod extractor;
pub mod fsio;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod states;
pub mod stats;

pub use error::{Error, Result};

pub type QuantumState = states::QuantumStateModel<f64>;
pub type MeasurementConfig = detector::MeasurementConfig<f64>;
pub type FilterChainConfig = dsp::FilterChainConfig<f64>;
pub type AutocorrelationReport = dsp::AutocorrelationReport<f64>;
pub type CalibrationPoint = calibration::CalibrationPoint<f64>;
pub type CalibrationResult = calibration::CalibrationResult<f64>;
pub type EntropyBound = entropy::EntropyBound<f64>;
