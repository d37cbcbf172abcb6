//! Balanced homodyne detector and ADC model.
//!
//! Each pulse draws an LO phase, samples the input state's quadrature at
//! that phase, scales it to raw ADC-input units, adds electronic and excess
//! noise, and quantizes.

mod io;

pub use io::{read_block_binary, read_block_csv, write_block_binary, write_block_csv, RAW_MAGIC};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Scalar};
use crate::states::{QuadratureSampler, QuantumStateModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoPhasePolicy<T> {
    Fixed(T),
    UniformRandom,
    /// Imperfect phase randomization: `center + width·N(0,1)`, wrapped.
    WrappedGaussian {
        center: T,
        width: T,
    },
}

impl<T: Scalar> LoPhasePolicy<T> {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            Self::Fixed(theta) => theta,
            Self::UniformRandom => T::TAU() * T::unit(rng),
            Self::WrappedGaussian { center, width } => wrap_angle(center + width * T::standard_normal(rng)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcessNoiseMode {
    Constant,
    /// `excess_noise_var` is per unit of LO power.
    PowerProportional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementConfig<T> {
    pub lo_phase_policy: LoPhasePolicy<T>,
    pub lo_power: T,
    pub pulse_rate: T,
    pub adc_bits: u32,
    pub adc_full_scale: T,
    pub electronic_noise_var: T,
    pub excess_noise_var: T,
    pub excess_noise_mode: ExcessNoiseMode,
    /// Raw units² per (power × vacuum-unit variance); the calibration
    /// gradient `m` estimates this.
    pub conversion_gain: T,
}

impl<T: Scalar> MeasurementConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("measurement config: {what}")));
        if !(2..=16).contains(&self.adc_bits) {
            return bad("adc_bits must be in [2, 16]");
        }
        if !(self.lo_power > T::zero()) || !self.lo_power.is_finite() {
            return bad("lo_power must be positive");
        }
        if !(self.pulse_rate > T::zero()) || !self.pulse_rate.is_finite() {
            return bad("pulse_rate must be positive");
        }
        if !(self.adc_full_scale > T::zero()) || !self.adc_full_scale.is_finite() {
            return bad("adc_full_scale must be positive");
        }
        if !(self.conversion_gain > T::zero()) || !self.conversion_gain.is_finite() {
            return bad("conversion_gain must be positive");
        }
        if !(self.electronic_noise_var >= T::zero()) || !(self.excess_noise_var >= T::zero()) {
            return bad("noise variances must be non-negative");
        }
        if let LoPhasePolicy::WrappedGaussian { width, .. } = self.lo_phase_policy {
            if !(width >= T::zero()) {
                return bad("phase width must be non-negative");
            }
        }
        Ok(())
    }

    /// ADC step `δ_ADC = full_scale / 2^bits`.
    pub fn adc_step(&self) -> T {
        self.adc_full_scale / T::from_usize_lossy(1usize << self.adc_bits)
    }

    pub fn code_range(&self) -> (i32, i32) {
        let half = 1i32 << (self.adc_bits - 1);
        (-half, half - 1)
    }

    /// Raw units per vacuum unit of quadrature: `√(2·gain·P)`.
    pub fn analog_scale(&self) -> T {
        (T::lit(2.0) * self.conversion_gain * self.lo_power).sqrt()
    }

    pub fn effective_excess_var(&self) -> T {
        match self.excess_noise_mode {
            ExcessNoiseMode::Constant => self.excess_noise_var,
            ExcessNoiseMode::PowerProportional => self.excess_noise_var * self.lo_power,
        }
    }

    /// Quantizes a raw analog value: round half away from zero, clip into
    /// the extreme codes. Returns the code and whether it was clipped.
    pub fn quantize(&self, analog: T) -> (i32, bool) {
        let (lo, hi) = self.code_range();
        let x = (analog / self.adc_step()).round();
        if x < T::from_i32(lo).unwrap() {
            (lo, true)
        } else if x > T::from_i32(hi).unwrap() {
            (hi, true)
        } else {
            (x.to_i32().expect("in-range code"), false)
        }
    }

    /// Canonical text form, stable across runs; hashed into block headers.
    pub fn canonical(&self) -> String {
        let policy = match self.lo_phase_policy {
            LoPhasePolicy::Fixed(t) => format!("fixed:{:e}", t.to_f64_lossy()),
            LoPhasePolicy::UniformRandom => "uniform".to_string(),
            LoPhasePolicy::WrappedGaussian { center, width } => {
                format!(
                    "wrapped_gaussian:{:e}:{:e}",
                    center.to_f64_lossy(),
                    width.to_f64_lossy()
                )
            }
        };
        format!(
            "policy={policy};lo_power={:e};pulse_rate={:e};adc_bits={};adc_full_scale={:e};electronic={:e};excess={:e};excess_mode={:?};gain={:e}",
            self.lo_power.to_f64_lossy(),
            self.pulse_rate.to_f64_lossy(),
            self.adc_bits,
            self.adc_full_scale.to_f64_lossy(),
            self.electronic_noise_var.to_f64_lossy(),
            self.excess_noise_var.to_f64_lossy(),
            self.excess_noise_mode,
            self.conversion_gain.to_f64_lossy(),
        )
    }

    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Quantized detector output for one acquisition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSampleBlock {
    pub codes: Vec<i16>,
    pub bits: u32,
    pub config_hash: String,
    pub run_id: String,
    pub clipped: u64,
}

impl RawSampleBlock {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self
    }

    pub fn clipped_fraction(&self) -> f64 {
        self.clipped as f64 / self.codes.len().max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.bits) {
            return Err(Error::invalid(format!("block bit depth {}", self.bits)));
        }
        if self.codes.is_empty() {
            return Err(Error::invalid("empty sample block"));
        }
        let half = 1i32 << (self.bits - 1);
        if let Some(c) = self.codes.iter().find(|&&c| (c as i32) < -half || (c as i32) >= half) {
            return Err(Error::invalid(format!("code {c} outside {}-bit range", self.bits)));
        }
        Ok(())
    }

    /// Codes converted back to raw analog units (bin centres).
    pub fn dequantized<T: Scalar>(&self, adc_step: T) -> Vec<T> {
        self.codes.iter().map(|&c| T::from_i16(c).unwrap() * adc_step).collect()
    }
}

/// Simulates `count` pulses of the detector.
pub fn measure_block<T: Scalar, R: Rng + ?Sized>(
    state: &QuantumStateModel<T>,
    config: &MeasurementConfig<T>,
    count: usize,
    rng: &mut R,
) -> Result<RawSampleBlock> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    config.validate()?;
    let sampler = QuadratureSampler::new(state)?;
    let scale = config.analog_scale();
    let el_sd = config.electronic_noise_var.sqrt();
    let ex_sd = config.effective_excess_var().sqrt();
    let mut codes = Vec::with_capacity(count);
    let mut clipped = 0u64;
    for _ in 0..count {
        let theta = config.lo_phase_policy.draw(rng);
        let q = sampler.sample(theta, rng);
        let mut analog = q * scale;
        if el_sd > T::zero() {
            analog += el_sd * T::standard_normal(rng);
        }
        if ex_sd > T::zero() {
            analog += ex_sd * T::standard_normal(rng);
        }
        let (code, was_clipped) = config.quantize(analog);
        clipped += was_clipped as u64;
        codes.push(code as i16);
    }
    Ok(RawSampleBlock {
        codes,
        bits: config.adc_bits,
        config_hash: config.config_hash(),
        run_id: String::new(),
        clipped,
    })
}

/// Measurement resolution in vacuum units, `δ = δ_ADC / √(2 m P)`.
pub fn adc_resolution_vacuum_units<T: Scalar>(config: &MeasurementConfig<T>, gradient: T, power: T) -> Result<T> {
    if !(gradient > T::zero()) || !gradient.is_finite() {
        return Err(Error::CalibrationInvalid(format!(
            "gradient must be positive, got {gradient}"
        )));
    }
    if !(power > T::zero()) || !power.is_finite() {
        return Err(Error::CalibrationInvalid(format!(
            "power must be positive, got {power}"
        )));
    }
    Ok(resolution_from_step(config.adc_step(), gradient, power))
}

pub(crate) fn resolution_from_step<T: Scalar>(adc_step: T, gradient: T, power: T) -> T {
    adc_step / (T::lit(2.0) * gradient * power).sqrt()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::special::gaussian_interval;

    pub(crate) fn config(gain: f64, power: f64) -> MeasurementConfig<f64> {
        MeasurementConfig {
            lo_phase_policy: LoPhasePolicy::UniformRandom,
            lo_power: power,
            pulse_rate: 50e6,
            adc_bits: 8,
            adc_full_scale: 256.0,
            electronic_noise_var: 0.0,
            excess_noise_var: 0.0,
            excess_noise_mode: ExcessNoiseMode::Constant,
            conversion_gain: gain,
        }
    }

    fn code_variance(codes: &[i16]) -> f64 {
        let n = codes.len() as f64;
        let mean = codes.iter().map(|&c| c as f64).sum::<f64>() / n;
        codes.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }

    /// Exact variance of a quantized, clipped zero-mean Gaussian, by summing
    /// code probabilities.
    fn quantized_gaussian_variance(sigma_codes: f64, lo: i32, hi: i32) -> f64 {
        let var = sigma_codes * sigma_codes;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for c in lo..=hi {
            let a = if c == lo { f64::NEG_INFINITY } else { c as f64 - 0.5 };
            let b = if c == hi { f64::INFINITY } else { c as f64 + 0.5 };
            let p = if a.is_infinite() {
                0.5 * (1.0 + crate::special::erf(b / (2.0 * var).sqrt()))
            } else if b.is_infinite() {
                0.5 * crate::special::erfc(a / (2.0 * var).sqrt())
            } else {
                gaussian_interval(0.0, var, a, b)
            };
            m1 += p * c as f64;
            m2 += p * (c as f64).powi(2);
        }
        m2 - m1 * m1
    }

    #[test]
    fn vacuum_code_variance() {
        // analog σ = 20 codes: 2·gain·P·(1/2) = 400
        let cfg = config(400.0, 1.0);
        let mut rng = substream(11, "det-var");
        let b = measure_block(&QuantumStateModel::Vacuum, &cfg, 1_000_000, &mut rng).unwrap();
        let want = quantized_gaussian_variance(20.0, -128, 127);
        assert!((want - 400.0833).abs() < 0.01, "{want}");
        let got = code_variance(&b.codes);
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
        assert_eq!(b.clipped, 0);
    }

    #[test]
    fn squeezed_variance_ratio() {
        let mut cfg = config(400.0, 1.0);
        cfg.lo_phase_policy = LoPhasePolicy::Fixed(0.0);
        let mut rng = substream(12, "det-sq");
        let sq = measure_block(&QuantumStateModel::squeezed_vacuum(1.0, 0.0), &cfg, 1_000_000, &mut rng).unwrap();
        let vac = measure_block(&QuantumStateModel::Vacuum, &cfg, 1_000_000, &mut rng).unwrap();
        let ratio = code_variance(&sq.codes) / code_variance(&vac.codes);
        let want = (-2.0f64).exp();
        // quantization adds 1/12 code² to both; negligible against 5%
        assert!((ratio / want - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn resolution_formula() {
        let cfg = config(50.0, 1.0);
        let mut c = cfg.clone();
        c.adc_full_scale = 256.0;
        assert!((adc_resolution_vacuum_units(&c, 50.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        let d1 = adc_resolution_vacuum_units(&c, 338.0, 1.0).unwrap();
        assert!((d1 - 1.0 / 26.0).abs() < 1e-15);
        let d4 = adc_resolution_vacuum_units(&c, 338.0, 4.0).unwrap();
        assert!((d4 - d1 / 2.0).abs() < 1e-15);
        assert!(matches!(
            adc_resolution_vacuum_units(&c, 0.0, 1.0),
            Err(Error::CalibrationInvalid(_))
        ));
        assert!(adc_resolution_vacuum_units(&c, 1.0, -1.0).is_err());
    }

    #[test]
    fn resolution_monotone_in_power() {
        let c = config(50.0, 1.0);
        let mut last = f64::INFINITY;
        for i in 1..50 {
            let d = adc_resolution_vacuum_units(&c, 50.0, i as f64 * 0.1).unwrap();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn quantizer_rounding_and_clipping() {
        let c = config(1.0, 1.0);
        assert_eq!(c.quantize(0.5), (1, false));
        assert_eq!(c.quantize(-0.5), (-1, false));
        assert_eq!(c.quantize(0.49), (0, false));
        assert_eq!(c.quantize(127.4), (127, false));
        assert_eq!(c.quantize(127.5), (127, true));
        assert_eq!(c.quantize(-128.4), (-128, false));
        assert_eq!(c.quantize(-1e9), (-128, true));
    }

    #[test]
    fn clipping_accounting() {
        // σ = 60 codes, so |x| > 127.5 happens with probability ≈ 3.4%
        let cfg = config(3600.0, 1.0);
        let mut rng = substream(13, "det-clip");
        let n = 200_000;
        let b = measure_block(&QuantumStateModel::Vacuum, &cfg, n, &mut rng).unwrap();
        let var = 3600.0;
        let p =
            gaussian_interval(0.0, var, 127.5, f64::INFINITY) + gaussian_interval(0.0, var, f64::NEG_INFINITY, -128.5);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (b.clipped_fraction() - p).abs() < 3.0 * sd,
            "{} vs {p}",
            b.clipped_fraction()
        );
        b.validate().unwrap();
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = config(1.0, 1.0);
        c.adc_bits = 17;
        assert!(c.validate().is_err());
        let mut rng = substream(1, "x");
        assert!(measure_block(&QuantumStateModel::Vacuum, &config(1.0, 1.0), 0, &mut rng).is_err());
        let mut c = config(1.0, 1.0);
        c.electronic_noise_var = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dequantized_mean_consistency() {
        let mut cfg = config(100.0, 1.0);
        cfg.lo_phase_policy = LoPhasePolicy::Fixed(0.0);
        let alpha = num_complex::Complex::new(0.8, 0.0);
        let st = QuantumStateModel::DisplacedSqueezed {
            r: 0.0,
            squeeze_angle: 0.0,
            displacement: alpha,
        };
        let mut rng = substream(14, "det-mean");
        let n = 100_000;
        let b = measure_block(&st, &cfg, n, &mut rng).unwrap();
        let xs = b.dequantized::<f64>(cfg.adc_step());
        let mean = xs.iter().sum::<f64>() / n as f64;
        let want = 2f64.sqrt() * 0.8 * cfg.analog_scale();
        let sigma = (0.5f64).sqrt() * cfg.analog_scale();
        assert!((mean - want).abs() < cfg.adc_step() / 2.0 + 3.0 * sigma / (n as f64).sqrt());
    }
}
