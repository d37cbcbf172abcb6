//! Min-entropy bounds for phase-randomized homodyne sampling.
//!
//! After phase randomization the input is a Fock-diagonal mixture, every
//! Fock state has a flatter binned quadrature distribution than the vacuum,
//! and so the vacuum's guessing probability `erf(δ/2)` bounds the
//! adversary's. That vacuum value is the only certified bound offered here.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::erf;
use crate::states::{max_bin_probability, QuantumStateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundBasis {
    /// `H_min ≥ -log2 erf(δ/2)`, the vacuum guessing probability.
    VacuumBound,
}

impl std::fmt::Display for BoundBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("vacuum-bound")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBound<T> {
    pub delta: T,
    pub p_guess_bound: T,
    pub h_min_bits: T,
    pub basis: BoundBasis,
}

impl<T: Scalar> EntropyBound<T> {
    /// Fragment used in calibration log lines.
    pub fn log_fields(&self) -> String {
        format!(
            "delta={:.12e} p_guess={:.12e} h_min={:.12} basis={}",
            self.delta.to_f64_lossy(),
            self.p_guess_bound.to_f64_lossy(),
            self.h_min_bits.to_f64_lossy(),
            self.basis
        )
    }
}

/// Vacuum min-entropy of a quadrature binned with width `delta`.
pub fn vacuum_min_entropy<T: Scalar>(delta: T) -> Result<EntropyBound<T>> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::invalid(format!("bin width must be positive, got {delta}")));
    }
    let p = erf(delta * T::lit(0.5));
    let h = -p.log2();
    Ok(EntropyBound {
        delta,
        p_guess_bound: p,
        // erf saturates to exactly 1 for wide bins; keep the sign clean
        h_min_bits: h.max(T::zero()),
        basis: BoundBasis::VacuumBound,
    })
}

/// Largest `δ` accepted by [`small_delta_guessing_probability`].
pub const SMALL_DELTA_MAX: f64 = 0.2;

/// Leading-order guessing probability `δ/√π`. Only valid for narrow bins,
/// where it overestimates `erf(δ/2)`; `(δ/√π - erf(δ/2)) / (δ/√π) < δ²/12`.
pub fn small_delta_guessing_probability<T: Scalar>(delta: T) -> Result<T> {
    if !(delta > T::zero()) || delta > T::lit(SMALL_DELTA_MAX) {
        return Err(Error::invalid(format!(
            "small-δ approximation needs 0 < δ <= {SMALL_DELTA_MAX}, got {delta}; use vacuum_min_entropy"
        )));
    }
    Ok(delta * T::FRAC_2_SQRT_PI() * T::lit(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdiMargin<T> {
    pub state: QuantumStateModel<T>,
    pub max_bin_probability: T,
    /// `erf(δ/2) - max_bin_probability`; never negative for a valid bound.
    pub margin: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdiReport<T> {
    pub delta: T,
    pub vacuum_bound: T,
    pub margins: Vec<SdiMargin<T>>,
}

impl<T: Scalar> SdiReport<T> {
    pub fn min_margin(&self) -> T {
        self.margins.iter().map(|m| m.margin).fold(T::infinity(), T::min)
    }
}

/// Slack allowed for bin-integration round-off before a margin counts as a
/// violation.
pub const MARGIN_TOLERANCE: f64 = 1e-12;

/// Checks the vacuum bound against Fock-diagonal inputs: no state may have a
/// bin more likely than the vacuum's central bin.
pub fn sdi_bound_check<T: Scalar>(states: &[QuantumStateModel<T>], delta: T) -> Result<SdiReport<T>> {
    let vacuum = vacuum_min_entropy(delta)?.p_guess_bound;
    let mut margins = Vec::with_capacity(states.len());
    for s in states {
        if s.fock_diagonal().is_none() {
            return Err(Error::invalid(format!("state {s:?} is not Fock-diagonal")));
        }
        let p = match s {
            // the bound is attained exactly by the vacuum
            QuantumStateModel::Vacuum | QuantumStateModel::Fock(0) => vacuum,
            _ => max_bin_probability(s, T::zero(), delta)?,
        };
        let margin = vacuum - p;
        if margin < -T::lit(MARGIN_TOLERANCE) {
            return Err(Error::SecurityViolation(format!(
                "state {s:?} has bin probability {p} above the vacuum bound {vacuum} at δ={delta}"
            )));
        }
        margins.push(SdiMargin {
            state: s.clone(),
            max_bin_probability: p,
            margin,
        });
    }
    Ok(SdiReport {
        delta,
        vacuum_bound: vacuum,
        margins,
    })
}

/// Min-entropy of the empirical code histogram. Diagnostic only: the value
/// depends on the observed distribution and certifies nothing.
pub fn diagnostic_only_empirical_min_entropy(codes: &[i16]) -> Option<f64> {
    if codes.is_empty() {
        return None;
    }
    let mut counts = std::collections::HashMap::new();
    for &c in codes {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let max = *counts.values().max()?;
    Some(-(max as f64 / codes.len() as f64).log2())
}

/// Secure output rate in bits per second.
pub fn generation_rate<T: Scalar>(pulse_rate: T, bits_per_sample: T) -> T {
    pulse_rate * bits_per_sample
}
