//! Linear-phase FIR low-pass filters.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Designed low-pass: Hamming-windowed sinc, DC gain 1, with the design
/// cutoff tuned so the −3 dB point lands on the requested cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct LowpassFir<T> {
    pub taps: Vec<T>,
    pub rate: T,
    pub cutoff: T,
    pub design_cutoff: T,
    pub nyquist_null: bool,
}

fn hamming<T: Scalar>(i: usize, n_taps: usize) -> T {
    T::lit(0.54) - T::lit(0.46) * (T::TAU() * T::lit(i as f64) / T::lit((n_taps - 1) as f64)).cos()
}

fn windowed_sinc<T: Scalar>(n_taps: usize, fc_over_rate: T, nyquist_null: bool) -> Vec<T> {
    let mid = n_taps / 2;
    let two = T::lit(2.0);
    let mut h: Vec<T> = (0..n_taps)
        .map(|i| {
            let k = T::lit(i as f64 - mid as f64);
            let ideal = if i == mid {
                two * fc_over_rate
            } else {
                (T::TAU() * fc_over_rate * k).sin() / (T::PI() * k)
            };
            ideal * hamming(i, n_taps)
        })
        .collect();
    if nyquist_null {
        // remove the sidelobe leakage at rate/2 with a window-shaped
        // correction carried on the (−1)^k carrier
        let alt = |i: usize| {
            if (i + mid).is_multiple_of(2) {
                T::one()
            } else {
                -T::one()
            }
        };
        let leak: T = h.iter().enumerate().map(|(i, &v)| v * alt(i)).sum();
        let wsum: T = (0..n_taps).map(|i| hamming::<T>(i, n_taps)).sum();
        for (i, v) in h.iter_mut().enumerate() {
            *v -= leak * alt(i) * hamming::<T>(i, n_taps) / wsum;
        }
    }
    let sum: T = h.iter().copied().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Amplitude response of a symmetric filter at `f` (same units as `rate`).
pub fn amplitude_response<T: Scalar>(taps: &[T], rate: T, f: T) -> T {
    let mid = T::lit((taps.len() / 2) as f64);
    let w = T::TAU() * f / rate;
    taps.iter()
        .enumerate()
        .map(|(i, &h)| h * (w * (T::from_usize_lossy(i) - mid)).cos())
        .sum::<T>()
}

impl<T: Scalar> LowpassFir<T> {
    pub fn design(rate: T, cutoff: T, n_taps: usize) -> Result<Self> {
        Self::design_with(rate, cutoff, n_taps, false)
    }

    /// Variant whose response is exactly zero at `rate/2`, used behind the
    /// Nyquist modulation where that frequency carries the original DC.
    pub fn design_with_nyquist_null(rate: T, cutoff: T, n_taps: usize) -> Result<Self> {
        Self::design_with(rate, cutoff, n_taps, true)
    }

    fn design_with(rate: T, cutoff: T, n_taps: usize, nyquist_null: bool) -> Result<Self> {
        if !(rate > T::zero()) || !rate.is_finite() {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let nyquist = rate / T::lit(2.0);
        if !(cutoff > T::zero()) || !(cutoff < nyquist) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff} must lie in (0, {nyquist}) for rate {rate}"
            )));
        }
        if n_taps < 3 || n_taps.is_multiple_of(2) {
            return Err(Error::invalid(format!("fir_taps must be odd and >= 3, got {n_taps}")));
        }
        let target = T::FRAC_1_SQRT_2();
        let gain_at_cutoff = |fd: T| amplitude_response(&windowed_sinc(n_taps, fd / rate, nyquist_null), rate, cutoff);
        // the windowed sinc sits near −6 dB at its design frequency, so the
        // −3 dB design frequency is above the requested cutoff
        let mut lo = cutoff;
        let cap = nyquist * T::lit(0.9999);
        let mut hi = (cutoff + T::lit(4.0) * rate / T::from_usize_lossy(n_taps)).min(cap);
        let design_cutoff = if gain_at_cutoff(hi) < target {
            hi
        } else {
            for _ in 0..60 {
                let mid = (lo + hi) / T::lit(2.0);
                if gain_at_cutoff(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo + hi) / T::lit(2.0)
        };
        Ok(Self {
            taps: windowed_sinc(n_taps, design_cutoff / rate, nyquist_null),
            rate,
            cutoff,
            design_cutoff,
            nyquist_null,
        })
    }

    pub fn half_len(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn response(&self, f: T) -> T {
        amplitude_response(&self.taps, self.rate, f)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n <= self.half_len() {
            return Err(Error::InsufficientData(format!(
                "{n} samples is too short for a {}-tap filter",
                self.taps.len()
            )));
        }
        Ok(())
    }

    /// Zero-phase output aligned with the input; edges use reflect padding.
    pub fn apply(&self, samples: &[T]) -> Result<Vec<T>> {
        self.check_len(samples.len())?;
        let padded = reflect_pad(samples, self.half_len());
        if self.taps.len() >= FFT_MIN_TAPS {
            let os = OverlapSave::new(&self.taps);
            let mut out = vec![T::zero(); samples.len()];
            for (s, chunk) in out.chunks_mut(os.step).enumerate() {
                os.segment(&padded, s, chunk);
            }
            return Ok(out);
        }
        Ok((0..samples.len()).map(|i| self.dot(&padded[i..])).collect())
    }

    /// Same as [`apply`](Self::apply), computed in independent blocks on the
    /// rayon pool. Direct filters split the output into `block_len` pieces;
    /// long filters use their fixed FFT segments. Bit-identical to `apply`.
    pub fn apply_blocks(&self, samples: &[T], block_len: usize) -> Result<Vec<T>> {
        self.check_len(samples.len())?;
        let padded = reflect_pad(samples, self.half_len());
        let mut out = vec![T::zero(); samples.len()];
        if self.taps.len() >= FFT_MIN_TAPS {
            let os = OverlapSave::new(&self.taps);
            out.par_chunks_mut(os.step)
                .enumerate()
                .for_each(|(s, chunk)| os.segment(&padded, s, chunk));
            return Ok(out);
        }
        let block_len = block_len.max(1);
        out.par_chunks_mut(block_len).enumerate().for_each(|(b, chunk)| {
            let start = b * block_len;
            for (j, y) in chunk.iter_mut().enumerate() {
                *y = self.dot(&padded[start + j..]);
            }
        });
        Ok(out)
    }

    #[inline]
    fn dot(&self, window: &[T]) -> T {
        let mut acc = T::zero();
        for (h, x) in self.taps.iter().zip(window) {
            acc += *h * *x;
        }
        acc
    }
}

/// Filters at least this long run through FFT overlap-save.
pub const FFT_MIN_TAPS: usize = 128;

/// Overlap-save convolution with fixed segments, so the result does not
/// depend on how segments are scheduled.
struct OverlapSave<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
    spectrum: Vec<Complex<T>>,
    size: usize,
    taps: usize,
    step: usize,
}

impl<T: Scalar> OverlapSave<T> {
    fn new(taps: &[T]) -> Self {
        let size = (4 * taps.len()).next_power_of_two().max(4096);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        let ifft = planner.plan_fft_inverse(size);
        let mut spectrum: Vec<Complex<T>> = (0..size)
            .map(|i| Complex::new(taps.get(i).copied().unwrap_or_else(T::zero), T::zero()))
            .collect();
        fft.process(&mut spectrum);
        let scale = T::one() / T::from_usize_lossy(size);
        for c in &mut spectrum {
            *c *= scale;
        }
        Self {
            fft,
            ifft,
            spectrum,
            size,
            taps: taps.len(),
            step: size - taps.len() + 1,
        }
    }

    /// Outputs `s·step ..` of the correlation of `padded` with the
    /// (symmetric) taps.
    fn segment(&self, padded: &[T], s: usize, out: &mut [T]) {
        let start = s * self.step;
        let mut buf: Vec<Complex<T>> = (0..self.size)
            .map(|i| Complex::new(padded.get(start + i).copied().unwrap_or_else(T::zero), T::zero()))
            .collect();
        self.fft.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.spectrum) {
            *b *= *h;
        }
        self.ifft.process(&mut buf);
        for (j, y) in out.iter_mut().enumerate() {
            *y = buf[j + self.taps - 1].re;
        }
    }
}

/// Mirror padding without repeating the edge sample.
fn reflect_pad<T: Scalar>(x: &[T], pad: usize) -> Vec<T> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i.min(n - 1)]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n.saturating_sub(2 + i)]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minus_3db_at_cutoff() {
        for (rate, cutoff, taps) in [(40e9, 1.6e9, 201), (1.0, 0.1, 101), (50e6, 24.5e6, 401), (1.0, 0.3, 31)] {
            for null in [false, true] {
                let f = LowpassFir::<f64>::design_with(rate, cutoff, taps, null).unwrap();
                let g = f.response(cutoff);
                assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "{g}");
                let below = f.response(cutoff * 0.95);
                let above = f.response((cutoff * 1.05).min((cutoff + rate / 2.0) / 2.0));
                assert!(below > g && above < g);
            }
        }
    }

    #[test]
    fn dc_gain_and_stopband() {
        let f = LowpassFir::<f64>::design(1.0, 0.1, 201).unwrap();
        assert!((f.response(0.0) - 1.0).abs() < 1e-12);
        for k in 0..=100 {
            let fr = 0.4 + 0.1 * k as f64 / 100.0;
            assert!(f.response(fr).abs() < 0.01, "{fr}: {}", f.response(fr));
        }
    }

    #[test]
    fn nyquist_null_is_exact() {
        let f = LowpassFir::<f64>::design_with_nyquist_null(50e6, 24.5e6, 401).unwrap();
        assert!(f.response(25e6).abs() < 1e-15);
        assert!((f.response(0.0) - 1.0).abs() < 1e-12);
        let plain = LowpassFir::<f64>::design(50e6, 24.5e6, 401).unwrap();
        assert!(plain.response(25e6).abs() > 1e-4);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(LowpassFir::<f64>::design(1.0, 0.5, 101).is_err());
        assert!(LowpassFir::<f64>::design(1.0, 0.1, 100).is_err());
        assert!(LowpassFir::<f64>::design(1.0, 0.0, 101).is_err());
        let f = LowpassFir::<f64>::design(1.0, 0.1, 101).unwrap();
        assert!(f.apply(&[0.0; 50]).is_err());
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let f = LowpassFir::<f64>::design(1.0, 0.05, 301).unwrap();
        let mut rng = crate::rng::substream(1, "fir");
        let x: Vec<f64> = (0..20_000).map(|_| f64::standard_normal(&mut rng)).collect();
        let fast = f.apply(&x).unwrap();
        let padded = reflect_pad(&x, f.half_len());
        for i in (0..x.len()).step_by(7) {
            let direct = f.dot(&padded[i..]);
            assert!((fast[i] - direct).abs() < 1e-12, "{i}");
        }
        assert_eq!(fast, f.apply_blocks(&x, 123).unwrap());
    }

    #[test]
    fn reflect_pad_layout() {
        let p = reflect_pad(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(p, vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }
}
