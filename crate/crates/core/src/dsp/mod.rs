//! Offline filtering chain: detector-bandwidth low-pass, one sample per
//! pulse, and removal of low-frequency noise by Nyquist modulation.

mod fir;

pub use fir::{amplitude_response, LowpassFir};

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterChainConfig<T> {
    pub input_rate: T,
    pub lowpass_cutoff: T,
    pub pulse_rate: T,
    /// Fraction of the pulse period at which the per-pulse sample is taken.
    pub sample_phase: T,
    pub modulation_freq: T,
    pub post_mod_lowpass_cutoff: T,
    pub fir_taps: usize,
}

impl<T: Scalar> Default for FilterChainConfig<T> {
    fn default() -> Self {
        Self {
            input_rate: T::lit(40e9),
            lowpass_cutoff: T::lit(1.6e9),
            pulse_rate: T::lit(50e6),
            sample_phase: T::lit(0.5),
            modulation_freq: T::lit(25e6),
            // a 5 kHz high-pass edge: removes drift while leaving white
            // noise white at the 10⁶-sample autocorrelation resolution
            post_mod_lowpass_cutoff: T::lit(0.4999 * 50e6),
            fir_taps: 65_537,
        }
    }
}

impl<T: Scalar> FilterChainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::invalid(format!("filter chain: {what}")));
        let two = T::lit(2.0);
        if !(self.input_rate > T::zero() && self.pulse_rate > T::zero()) {
            return bad("rates must be positive".into());
        }
        if !(self.lowpass_cutoff > T::zero() && self.lowpass_cutoff < self.input_rate / two) {
            return bad(format!(
                "lowpass_cutoff {} must be below input_rate/2",
                self.lowpass_cutoff
            ));
        }
        if !(self.post_mod_lowpass_cutoff > T::zero() && self.post_mod_lowpass_cutoff < self.pulse_rate / two) {
            return bad(format!(
                "post_mod_lowpass_cutoff {} must be below pulse_rate/2",
                self.post_mod_lowpass_cutoff
            ));
        }
        if !(self.modulation_freq > T::zero() && self.modulation_freq <= self.pulse_rate / two) {
            return bad(format!(
                "modulation_freq {} must be in (0, pulse_rate/2]",
                self.modulation_freq
            ));
        }
        if !(self.sample_phase >= T::zero() && self.sample_phase < T::one()) {
            return bad("sample_phase must be in [0, 1)".into());
        }
        if self.fir_taps < 3 || self.fir_taps.is_multiple_of(2) {
            return bad(format!("fir_taps must be odd and >= 3, got {}", self.fir_taps));
        }
        rate_ratio(self.input_rate, self.pulse_rate)?;
        Ok(())
    }
}

/// Filtered samples with the warm-up region at each end marked.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered<T> {
    pub values: Vec<T>,
    /// Samples at each end affected by edge padding.
    pub transient: usize,
}

impl<T> Filtered<T> {
    /// Samples usable for entropy accounting.
    pub fn settled(&self) -> &[T] {
        let n = self.values.len();
        let t = self.transient.min(n / 2);
        &self.values[t..n - t]
    }
}

pub fn lowpass<T: Scalar>(samples: &[T], rate: T, cutoff: T, taps: usize) -> Result<Vec<T>> {
    LowpassFir::design(rate, cutoff, taps)?.apply(samples)
}

/// Block-parallel [`lowpass`]; output is bit-identical.
pub fn lowpass_parallel<T: Scalar>(samples: &[T], rate: T, cutoff: T, taps: usize, block_len: usize) -> Result<Vec<T>> {
    LowpassFir::design(rate, cutoff, taps)?.apply_blocks(samples, block_len)
}

fn rate_ratio<T: Scalar>(input_rate: T, pulse_rate: T) -> Result<usize> {
    let ratio = (input_rate / pulse_rate).to_f64_lossy();
    let r = ratio.round();
    if !(r >= 1.0) || (ratio - r).abs() > 1e-9 * r {
        return Err(Error::invalid(format!(
            "input_rate/pulse_rate = {ratio} is not an integer"
        )));
    }
    Ok(r as usize)
}

pub fn subsample_per_pulse<T: Scalar>(samples: &[T], input_rate: T, pulse_rate: T, sample_phase: T) -> Result<Vec<T>> {
    let ratio = rate_ratio(input_rate, pulse_rate)?;
    if !(sample_phase >= T::zero() && sample_phase < T::one()) {
        return Err(Error::invalid("sample_phase must be in [0, 1)"));
    }
    let offset = ((sample_phase * T::from_usize_lossy(ratio)).to_f64_lossy().round() as usize).min(ratio - 1);
    Ok(samples.chunks_exact(ratio).map(|c| c[offset]).collect())
}

/// Shifts the spectrum by `modulation_freq`, low-passes, and shifts back.
/// At the Nyquist frequency the carrier is `(−1)^k`, the shift is exact and
/// the result is a linear-phase high-pass with edge `rate/2 − cutoff`.
pub fn remove_low_frequency<T: Scalar>(
    samples: &[T],
    pulse_rate: T,
    modulation_freq: T,
    cutoff: T,
    taps: usize,
) -> Result<Filtered<T>> {
    let half = pulse_rate / T::lit(2.0);
    if !(modulation_freq > T::zero() && modulation_freq <= half) {
        return Err(Error::invalid(format!(
            "modulation_freq {modulation_freq} must be in (0, {half}]"
        )));
    }
    let nyquist = (modulation_freq - half).abs() <= half * T::lit(1e-12);
    let fir = if nyquist {
        LowpassFir::design_with_nyquist_null(pulse_rate, cutoff, taps)?
    } else {
        LowpassFir::design(pulse_rate, cutoff, taps)?
    };
    let carrier: Vec<T> = if nyquist {
        (0..samples.len())
            .map(|k| if k % 2 == 0 { T::one() } else { -T::one() })
            .collect()
    } else {
        let w = T::TAU() * modulation_freq / pulse_rate;
        (0..samples.len()).map(|k| (w * T::from_usize_lossy(k)).cos()).collect()
    };
    // a real cosine splits power between ±f and needs 2× to re-center;
    // the Nyquist sign flip moves the whole spectrum and needs none
    let regain = if nyquist { T::one() } else { T::lit(2.0) };
    let modulated: Vec<T> = samples.iter().zip(&carrier).map(|(x, c)| *x * *c).collect();
    let low = fir.apply(&modulated)?;
    Ok(Filtered {
        values: low.iter().zip(&carrier).map(|(y, c)| *y * *c * regain).collect(),
        transient: fir.half_len(),
    })
}

/// Per-pulse stage only: what runs on detector output already sampled
/// once per pulse.
pub fn filter_pulses<T: Scalar>(samples: &[T], config: &FilterChainConfig<T>) -> Result<Filtered<T>> {
    config.validate()?;
    remove_low_frequency(
        samples,
        config.pulse_rate,
        config.modulation_freq,
        config.post_mod_lowpass_cutoff,
        config.fir_taps,
    )
}

/// Full chain on an oscilloscope-rate waveform.
pub fn run_waveform<T: Scalar>(waveform: &[T], config: &FilterChainConfig<T>) -> Result<Filtered<T>> {
    config.validate()?;
    let fir = LowpassFir::design(config.input_rate, config.lowpass_cutoff, config.fir_taps)?;
    let smooth = fir.apply_blocks(waveform, 1 << 16)?;
    let ratio = rate_ratio(config.input_rate, config.pulse_rate)?;
    let pulses = subsample_per_pulse(&smooth, config.input_rate, config.pulse_rate, config.sample_phase)?;
    let mut out = filter_pulses(&pulses, config)?;
    out.transient += fir.half_len().div_ceil(ratio);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrelationReport<T> {
    /// Index = lag, starting at 0.
    pub coefficients: Vec<T>,
    pub ci95: T,
    pub n_samples: usize,
    pub fraction_outside_ci: T,
}

impl<T: Scalar> AutocorrelationReport<T> {
    pub fn max_lag(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lag,coefficient,ci95\n");
        for (lag, c) in self.coefficients.iter().enumerate() {
            let _ = writeln!(s, "{lag},{c:.8},{:.8}", self.ci95);
        }
        s
    }
}

/// Biased normalized sample autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation<T: Scalar>(samples: &[T], max_lag: usize) -> Result<AutocorrelationReport<T>> {
    let n = samples.len();
    if max_lag == 0 || n <= 10 * max_lag {
        return Err(Error::InsufficientData(format!(
            "autocorrelation to lag {max_lag} needs more than {} samples, got {n}",
            10 * max_lag
        )));
    }
    let nf = T::from_usize_lossy(n);
    let mean = samples.iter().copied().sum::<T>() / nf;
    let centered: Vec<T> = samples.iter().map(|&x| x - mean).collect();
    let c0: T = centered.iter().map(|&x| x * x).sum();
    if !(c0 > T::zero()) || !c0.is_finite() {
        return Err(Error::invalid("autocorrelation of a constant sequence is undefined"));
    }
    let coefficients: Vec<T> = (0..=max_lag)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return T::one();
            }
            let ck: T = centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| *a * *b).sum();
            (ck / c0).max(-T::one()).min(T::one())
        })
        .collect();
    let ci95 = T::lit(1.96) / nf.sqrt();
    let outside = coefficients[1..].iter().filter(|c| c.abs() > ci95).count();
    Ok(AutocorrelationReport {
        fraction_outside_ci: T::from_usize_lossy(outside) / T::from_usize_lossy(max_lag),
        coefficients,
        ci95,
        n_samples: n,
    })
}
