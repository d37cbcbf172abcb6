//! Monte Carlo of the squeezed-state forging attack.
//!
//! Eve sends a squeezed vacuum displaced along the squeezed quadrature by a
//! Gaussian amount `d`, with the displacement spread chosen so the total
//! variance at θ = 0 equals the vacuum's. With the LO phase fixed at the
//! value she expects, Alice sees a vacuum-like Gaussian while Eve, who knows
//! `d`, predicts the bin far better than the vacuum bound. Randomizing the
//! LO phase exposes the anti-squeezed quadrature.

use std::fmt::Write as _;

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::indexed_substream;
use crate::scalar::Scalar;
use crate::special::{erf, erfc, gaussian_interval};
use crate::states::QuantumStateModel;
use crate::stats::{ks_one_sample, KsResult};

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoMode {
    Fixed(f64),
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackScenario {
    pub r: f64,
    /// Variance of Eve's displacement along the squeezed quadrature; either
    /// zero or the vacuum-matching value `(1 − e^{−2r})/2`.
    pub displacement_var: f64,
    pub lo_mode: LoMode,
    pub delta: f64,
    pub n_rounds: usize,
}

pub const MIN_ROUNDS: usize = 10_000;

fn matched_displacement_var(r: f64) -> f64 {
    -(-2.0 * r).exp_m1() / 2.0
}

impl AttackScenario {
    /// Displacement spread chosen so the fixed-LO marginal is the vacuum's.
    pub fn vacuum_matched(r: f64, lo_mode: LoMode, delta: f64, n_rounds: usize) -> Self {
        Self {
            r,
            displacement_var: matched_displacement_var(r),
            lo_mode,
            delta,
            n_rounds,
        }
    }

    pub fn displacement_free(r: f64, lo_mode: LoMode, delta: f64, n_rounds: usize) -> Self {
        Self {
            r,
            displacement_var: 0.0,
            lo_mode,
            delta,
            n_rounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::invalid(format!("squeezing r must be >= 0, got {}", self.r)));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!(
                "bin width must be positive, got {}",
                self.delta
            )));
        }
        if self.n_rounds < MIN_ROUNDS {
            return Err(Error::invalid(format!(
                "attack needs at least {MIN_ROUNDS} rounds, got {}",
                self.n_rounds
            )));
        }
        let matched = matched_displacement_var(self.r);
        let ok = self.displacement_var == 0.0 || (self.displacement_var - matched).abs() <= 1e-9 * matched.max(1e-300);
        if !ok {
            return Err(Error::invalid(format!(
                "displacement variance {} is uncalibrated; use 0 or (1 - e^(-2r))/2 = {matched}",
                self.displacement_var
            )));
        }
        Ok(())
    }

    /// Expected variance of Alice's outcomes.
    pub fn theory_variance(&self) -> f64 {
        self.squeezed_variance() + self.displacement_contribution()
    }

    /// Contribution of the squeezed state alone.
    pub fn squeezed_variance(&self) -> f64 {
        match self.lo_mode {
            LoMode::Fixed(theta) => {
                let (s, c) = theta.sin_cos();
                ((-2.0 * self.r).exp() * c * c + (2.0 * self.r).exp() * s * s) / 2.0
            }
            LoMode::UniformRandom => (2.0 * self.r).cosh() / 2.0,
        }
    }

    fn displacement_contribution(&self) -> f64 {
        match self.lo_mode {
            LoMode::Fixed(theta) => self.displacement_var * theta.cos().powi(2),
            LoMode::UniformRandom => self.displacement_var / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub scenario: AttackScenario,
    pub measured_mean: f64,
    pub measured_variance: f64,
    pub theory_variance: f64,
    pub theory_variance_displacement_free: f64,
    /// Mean over rounds of Eve's exact probability of naming Alice's bin.
    pub eve_guess_rate: f64,
    /// Fraction of rounds in which her guess actually matched.
    pub eve_hit_rate: f64,
    /// `erf(δ/2)`.
    pub vacuum_bound: f64,
    /// KS test of Alice's outcomes against the vacuum `N(0, 1/2)`.
    pub mimicry: KsResult,
    /// Alice's outcomes in vacuum units, in round order.
    pub outcomes: Vec<f64>,
}

impl AttackReport {
    pub fn mimicry_pvalue(&self) -> f64 {
        self.mimicry.p_value
    }

    pub fn guess_advantage(&self) -> f64 {
        self.eve_guess_rate / self.vacuum_bound
    }

    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        let mode = match s.lo_mode {
            LoMode::Fixed(t) => format!("fixed theta={t}"),
            LoMode::UniformRandom => "uniform-random".into(),
        };
        let _ = writeln!(out, "lo_mode: {mode}");
        let _ = writeln!(out, "r: {}", s.r);
        let _ = writeln!(out, "displacement_var: {:.9}", s.displacement_var);
        let _ = writeln!(out, "delta: {}", s.delta);
        let _ = writeln!(out, "n_rounds: {}", s.n_rounds);
        let _ = writeln!(out, "measured_mean: {:.6}", self.measured_mean);
        let _ = writeln!(out, "measured_variance: {:.6}", self.measured_variance);
        let _ = writeln!(out, "theory_variance: {:.6}", self.theory_variance);
        let _ = writeln!(
            out,
            "theory_variance_displacement_free: {:.6}",
            self.theory_variance_displacement_free
        );
        let _ = writeln!(out, "eve_guess_rate: {:.6}", self.eve_guess_rate);
        let _ = writeln!(out, "eve_hit_rate: {:.6}", self.eve_hit_rate);
        let _ = writeln!(out, "vacuum_bound: {:.6}", self.vacuum_bound);
        let _ = writeln!(out, "guess_advantage: {:.3}", self.guess_advantage());
        let _ = writeln!(out, "mimicry_ks_statistic: {:.6}", self.mimicry.statistic);
        let _ = writeln!(out, "mimicry_pvalue: {:.6}", self.mimicry.p_value);
        out
    }
}

/// Bin index for `(kδ − δ/2, kδ + δ/2]`.
fn bin_of(x: f64, delta: f64) -> i64 {
    (x / delta - 0.5).ceil() as i64
}

struct ChunkStats {
    outcomes: Vec<f64>,
    guess_prob: f64,
    hits: u64,
}

fn run_chunk(s: &AttackScenario, base: u64, chunk: usize, len: usize) -> ChunkStats {
    let mut rng = indexed_substream(base, "attack-rounds", chunk as u64);
    let d_sd = s.displacement_var.sqrt();
    let mut outcomes = Vec::with_capacity(len);
    let mut guess_prob = 0.0;
    let mut hits = 0u64;
    for _ in 0..len {
        let d = d_sd * f64::standard_normal(&mut rng);
        let (theta, known) = match s.lo_mode {
            LoMode::Fixed(t) => (t, t),
            // Eve cannot know the phase and aims at her nominal θ = 0
            LoMode::UniformRandom => (std::f64::consts::TAU * f64::unit(&mut rng), 0.0),
        };
        let state = QuantumStateModel::DisplacedSqueezed {
            r: s.r,
            squeeze_angle: 0.0,
            displacement: Complex::new(d / std::f64::consts::SQRT_2, 0.0),
        };
        let (mean, var) = state.gaussian_moments(theta).expect("gaussian state");
        let x = mean + var.sqrt() * f64::standard_normal(&mut rng);
        let guess = bin_of(d * known.cos(), s.delta);
        let lo = (guess as f64 - 0.5) * s.delta;
        guess_prob += gaussian_interval(mean, var, lo, lo + s.delta);
        hits += (bin_of(x, s.delta) == guess) as u64;
        outcomes.push(x);
    }
    ChunkStats {
        outcomes,
        guess_prob,
        hits,
    }
}

pub fn run_attack<R: Rng + ?Sized>(scenario: &AttackScenario, rng: &mut R) -> Result<AttackReport> {
    scenario.validate()?;
    let base: u64 = rng.random();
    let n = scenario.n_rounds;
    let chunks: Vec<ChunkStats> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| run_chunk(scenario, base, c, CHUNK.min(n - c * CHUNK)))
        .collect();
    let mut outcomes = Vec::with_capacity(n);
    let mut guess_prob = 0.0;
    let mut hits = 0u64;
    for c in chunks {
        outcomes.extend(c.outcomes);
        guess_prob += c.guess_prob;
        hits += c.hits;
    }
    let nf = n as f64;
    let mean = outcomes.iter().sum::<f64>() / nf;
    let var = outcomes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let mimicry = ks_one_sample(&outcomes, |x| 0.5 * erfc(-x));
    Ok(AttackReport {
        scenario: *scenario,
        measured_mean: mean,
        measured_variance: var,
        theory_variance: scenario.theory_variance(),
        theory_variance_displacement_free: scenario.squeezed_variance(),
        eve_guess_rate: guess_prob / nf,
        eve_hit_rate: hits as f64 / nf,
        vacuum_bound: erf(scenario.delta / 2.0),
        mimicry,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use crate::rng::substream;

    #[test]
    fn fixed_lo_mimics_vacuum() {
        let s = AttackScenario::vacuum_matched(1.5, LoMode::Fixed(0.0), 0.1, 200_000);
        let r = run_attack(&s, &mut substream(1, "attack-test")).unwrap();
        assert!((r.theory_variance - 0.5).abs() < 1e-15);
        assert!(
            (r.measured_variance / 0.5 - 1.0).abs() < 0.01,
            "{}",
            r.measured_variance
        );
        assert!(r.mimicry_pvalue() > 0.001);
        // per-round success is bounded by erf(δ e^r / 2)
        let cap = erf(0.1 * 1.5f64.exp() / 2.0);
        assert!(r.eve_guess_rate < cap && r.eve_guess_rate > 3.0 * r.vacuum_bound);
        assert!((r.eve_hit_rate - r.eve_guess_rate).abs() < 0.005);
    }

    #[test]
    fn random_lo_reveals_squeezing() {
        let s = AttackScenario::displacement_free(1.5, LoMode::UniformRandom, 0.1, 200_000);
        let r = run_attack(&s, &mut substream(2, "attack-test")).unwrap();
        let want = 3.0f64.cosh() / 2.0;
        // phase average of the variance by quadrature as an independent check
        let gl = GaussLegendre::<f64>::new(64);
        let avg = gl.integrate(0.0, std::f64::consts::TAU, |t| {
            ((-3.0f64).exp() * t.cos().powi(2) + 3.0f64.exp() * t.sin().powi(2)) / 2.0
        }) / std::f64::consts::TAU;
        assert!((avg - want).abs() < 1e-12);
        assert!((r.measured_variance / want - 1.0).abs() < 0.02);
        assert!(r.mimicry_pvalue() < 1e-6);
    }

    #[test]
    fn no_squeezing_no_advantage() {
        for mode in [LoMode::Fixed(0.0), LoMode::UniformRandom] {
            let s = AttackScenario::vacuum_matched(0.0, mode, 0.1, 50_000);
            let r = run_attack(&s, &mut substream(3, "attack-test")).unwrap();
            assert_eq!(s.displacement_var, 0.0);
            assert!((r.theory_variance - 0.5).abs() < 1e-15);
            assert!(r.eve_guess_rate <= r.vacuum_bound + 1e-12);
            assert!(r.mimicry_pvalue() > 0.001);
        }
    }

    #[test]
    fn random_lo_variance_at_least_vacuum() {
        for r in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let v = AttackScenario::displacement_free(r, LoMode::UniformRandom, 0.1, MIN_ROUNDS).theory_variance();
            if r == 0.0 {
                assert_eq!(v, 0.5);
            } else {
                assert!(v > 0.5);
            }
        }
    }

    #[test]
    fn rejects_uncalibrated_or_short_runs() {
        let mut s = AttackScenario::vacuum_matched(1.0, LoMode::Fixed(0.0), 0.1, 20_000);
        s.displacement_var = 0.3;
        assert!(s.validate().is_err());
        let short = AttackScenario::vacuum_matched(1.0, LoMode::Fixed(0.0), 0.1, 100);
        assert!(short.validate().is_err());
    }

    #[test]
    fn deterministic_given_rng() {
        let s = AttackScenario::vacuum_matched(1.0, LoMode::UniformRandom, 0.1, 70_000);
        let a = run_attack(&s, &mut substream(4, "x")).unwrap();
        let b = run_attack(&s, &mut substream(4, "x")).unwrap();
        assert_eq!(a, b);
    }
}
