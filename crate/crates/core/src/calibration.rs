//! Calibration line (filtered variance against LO power), the resolution δ
//! it implies, and the rolling re-calibration policy.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::detector::resolution_from_step;
use crate::entropy::{vacuum_min_entropy, EntropyBound};
use crate::error::{Error, Result};
use crate::fsio;
use crate::scalar::Scalar;

pub const MIN_SAMPLES_PER_POINT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint<T> {
    pub power: T,
    /// Filtered-sample variance in raw ADC-input units².
    pub variance: T,
    pub n_samples: usize,
}

impl<T: Scalar> CalibrationPoint<T> {
    /// Unbiased sample variance of `samples` (already in raw units).
    pub fn from_samples(power: T, samples: &[T]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InsufficientData("variance needs at least two samples".into()));
        }
        let nf = T::from_usize_lossy(n);
        let mean = samples.iter().copied().sum::<T>() / nf;
        let ss: T = samples.iter().map(|&x| (x - mean) * (x - mean)).sum();
        Ok(Self {
            power,
            variance: ss / (nf - T::one()),
            n_samples: n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings<T> {
    pub min_points: usize,
    /// Required ratio between the largest and smallest power.
    pub min_span_ratio: T,
    /// Standard errors subtracted from the gradient for the certified δ.
    pub conservatism_sigmas: T,
    /// Defaults to the largest calibrated power.
    pub operating_power: Option<T>,
    /// Raw-unit width of one ADC code.
    pub adc_step: T,
}

impl<T: Scalar> CalibrationSettings<T> {
    pub fn new(adc_step: T) -> Self {
        Self {
            min_points: 5,
            min_span_ratio: T::lit(2.0),
            conservatism_sigmas: T::lit(2.0),
            operating_power: None,
            adc_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult<T> {
    pub gradient: T,
    /// Electronic-noise contribution.
    pub intercept: T,
    pub gradient_stderr: T,
    pub intercept_stderr: T,
    pub r_squared: T,
    pub n_points: usize,
    pub operating_power: T,
    pub adc_step: T,
    pub conservatism_sigmas: T,
    /// δ from the fitted gradient.
    pub delta: T,
    /// δ from `gradient − k·stderr`; the certified value.
    pub delta_conservative: T,
    /// Intercept below zero by more than two standard errors.
    pub intercept_warning: bool,
}

impl<T: Scalar> CalibrationResult<T> {
    pub fn gradient_low(&self) -> T {
        self.gradient - self.conservatism_sigmas * self.gradient_stderr
    }

    /// Certified bound at the conservative δ.
    pub fn entropy_bound(&self) -> EntropyBound<T> {
        vacuum_min_entropy(self.delta_conservative).expect("validated positive delta")
    }

    pub fn h_min_bits(&self) -> T {
        self.entropy_bound().h_min_bits
    }

    /// Nominal bound at the fitted gradient, for reference only.
    pub fn nominal_bound(&self) -> EntropyBound<T> {
        vacuum_min_entropy(self.delta).expect("validated positive delta")
    }
}

/// Ordinary least squares of variance on power.
pub fn fit_calibration<T: Scalar>(
    points: &[CalibrationPoint<T>],
    settings: &CalibrationSettings<T>,
) -> Result<CalibrationResult<T>> {
    let invalid = |m: String| Err(Error::CalibrationInvalid(m));
    if !(settings.adc_step > T::zero()) {
        return invalid("adc_step must be positive".into());
    }
    for p in points {
        if !(p.power > T::zero()) || !p.power.is_finite() {
            return invalid(format!("power must be positive, got {}", p.power));
        }
        if !(p.variance >= T::zero()) || !p.variance.is_finite() {
            return invalid(format!("variance must be non-negative, got {}", p.variance));
        }
        if p.n_samples < MIN_SAMPLES_PER_POINT {
            return invalid(format!(
                "each point needs at least {MIN_SAMPLES_PER_POINT} samples, got {}",
                p.n_samples
            ));
        }
    }
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.n_samples != first.n_samples) {
            return invalid("all points must use the same sample count".into());
        }
    }
    let mut distinct: Vec<T> = points.iter().map(|p| p.power).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let min_points = settings.min_points.max(3);
    if distinct.len() < min_points {
        return invalid(format!(
            "insufficient span: {} distinct powers, need {min_points}",
            distinct.len()
        ));
    }
    let (pmin, pmax) = (distinct[0], distinct[distinct.len() - 1]);
    if pmax / pmin < settings.min_span_ratio {
        return invalid(format!(
            "insufficient span: powers cover {}x, need {}x",
            pmax / pmin,
            settings.min_span_ratio
        ));
    }

    let n = T::from_usize_lossy(points.len());
    let xbar = points.iter().map(|p| p.power).sum::<T>() / n;
    let ybar = points.iter().map(|p| p.variance).sum::<T>() / n;
    let sxx: T = points.iter().map(|p| (p.power - xbar).powi(2)).sum();
    let sxy: T = points.iter().map(|p| (p.power - xbar) * (p.variance - ybar)).sum();
    let syy: T = points.iter().map(|p| (p.variance - ybar).powi(2)).sum();
    let gradient = sxy / sxx;
    let intercept = ybar - gradient * xbar;
    let ssr: T = points
        .iter()
        .map(|p| (p.variance - intercept - gradient * p.power).powi(2))
        .sum();
    let s2 = ssr / (n - T::lit(2.0));
    let gradient_stderr = (s2 / sxx).sqrt();
    let intercept_stderr = (s2 * (T::one() / n + xbar * xbar / sxx)).sqrt();
    let r_squared = if syy > T::zero() {
        T::one() - ssr / syy
    } else {
        T::one()
    };

    let operating_power = settings.operating_power.unwrap_or(pmax);
    if !(operating_power > T::zero()) {
        return invalid(format!("operating power must be positive, got {operating_power}"));
    }
    if !(gradient > T::zero()) {
        return Err(Error::CalibrationFailed(format!("gradient {gradient} is not positive")));
    }
    let k = settings.conservatism_sigmas;
    let low = gradient - k * gradient_stderr;
    if !(low > T::zero()) {
        return Err(Error::CalibrationFailed(format!(
            "gradient {gradient} minus {k} standard errors ({gradient_stderr}) is not positive"
        )));
    }
    Ok(CalibrationResult {
        gradient,
        intercept,
        gradient_stderr,
        intercept_stderr,
        r_squared,
        n_points: points.len(),
        operating_power,
        adc_step: settings.adc_step,
        conservatism_sigmas: k,
        delta: resolution_from_step(settings.adc_step, gradient, operating_power),
        delta_conservative: resolution_from_step(settings.adc_step, low, operating_power),
        intercept_warning: intercept < -(T::lit(2.0) * intercept_stderr),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecalibrationPolicy {
    pub interval_s: f64,
    /// Relative change in H_min between successive calibrations.
    pub drift_threshold: f64,
}

impl Default for RecalibrationPolicy {
    fn default() -> Self {
        Self {
            interval_s: 600.0,
            drift_threshold: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Recalibrate,
    Alarm,
}

/// A calibration with the time it was taken (Unix seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRecord<T> {
    pub timestamp: i64,
    pub result: CalibrationResult<T>,
}

/// Alarm beats recalibrate beats keep. `now` is supplied by the caller.
pub fn recalibration_scheduler<T: Scalar>(
    history: &[CalibrationRecord<T>],
    policy: &RecalibrationPolicy,
    now: i64,
) -> Decision {
    let Some(last) = history.last() else {
        return Decision::Recalibrate;
    };
    if let [.., prev, last] = history {
        let a = prev.result.h_min_bits().to_f64_lossy();
        let b = last.result.h_min_bits().to_f64_lossy();
        if !((b - a).abs() / a <= policy.drift_threshold) {
            return Decision::Alarm;
        }
    }
    if (now - last.timestamp) as f64 > policy.interval_s {
        return Decision::Recalibrate;
    }
    Decision::Keep
}

pub fn format_timestamp(ts: i64) -> Result<String> {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .ok_or_else(|| Error::invalid(format!("timestamp {ts} out of range")))
}

pub fn parse_timestamp(s: &str) -> Result<i64> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.timestamp())
        .map_err(|e| Error::invalid(format!("bad timestamp {s:?}: {e}")))
}

/// One log line: ISO timestamp followed by `key=value` fields.
pub fn format_log_line<T: Scalar>(record: &CalibrationRecord<T>) -> Result<String> {
    let r = &record.result;
    let f = |v: T| format!("{:.12e}", v.to_f64_lossy());
    Ok(format!(
        "{} m={} intercept={} m_stderr={} intercept_stderr={} r2={} n_points={} p_op={} adc_step={} sigmas={} delta_nominal={} {} intercept_warning={}",
        format_timestamp(record.timestamp)?,
        f(r.gradient),
        f(r.intercept),
        f(r.gradient_stderr),
        f(r.intercept_stderr),
        f(r.r_squared),
        r.n_points,
        f(r.operating_power),
        f(r.adc_step),
        f(r.conservatism_sigmas),
        f(r.delta),
        r.entropy_bound().log_fields(),
        r.intercept_warning as u8,
    ))
}

pub fn parse_log_line<T: Scalar>(line: &str) -> Result<CalibrationRecord<T>> {
    let mut parts = line.split_whitespace();
    let ts = parse_timestamp(parts.next().ok_or_else(|| Error::invalid("empty log line"))?)?;
    let fields: Vec<(&str, &str)> = parts.filter_map(|p| p.split_once('=')).collect();
    let get = |key: &str| -> Result<&str> {
        fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::invalid(format!("log line lacks {key}")))
    };
    let num = |key: &str| -> Result<T> {
        let v = get(key)?;
        v.parse::<f64>()
            .map(T::lit)
            .map_err(|_| Error::invalid(format!("log field {key}={v} is not a number")))
    };
    Ok(CalibrationRecord {
        timestamp: ts,
        result: CalibrationResult {
            gradient: num("m")?,
            intercept: num("intercept")?,
            gradient_stderr: num("m_stderr")?,
            intercept_stderr: num("intercept_stderr")?,
            r_squared: num("r2")?,
            n_points: get("n_points")?
                .parse()
                .map_err(|_| Error::invalid("n_points is not an integer"))?,
            operating_power: num("p_op")?,
            adc_step: num("adc_step")?,
            conservatism_sigmas: num("sigmas")?,
            delta: num("delta_nominal")?,
            delta_conservative: num("delta")?,
            intercept_warning: get("intercept_warning")? == "1",
        },
    })
}

pub fn append_log<T: Scalar>(path: &Path, record: &CalibrationRecord<T>) -> Result<()> {
    fsio::append_line(path, &format_log_line(record)?)
}

/// Missing file reads as an empty history.
pub fn read_log<T: Scalar>(path: &Path) -> Result<Vec<CalibrationRecord<T>>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    fsio::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| parse_log_line(l).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}
