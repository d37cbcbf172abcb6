use rand::Rng;

use super::{fock_density, support_half_width, QuantumStateModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reusable sampler for one state model. Gaussian states are drawn
/// directly; Fock-diagonal states pick a photon number and then use
/// rejection sampling against a wider Gaussian envelope.
#[derive(Debug, Clone)]
pub struct QuadratureSampler<T> {
    state: QuantumStateModel<T>,
    fock: Option<FockTables<T>>,
}

#[derive(Debug, Clone)]
struct FockTables<T> {
    /// cumulative photon-number distribution
    cumulative: Vec<(T, usize)>,
    /// envelope bound `M_n` indexed by photon number
    bounds: Vec<T>,
}

impl<T: Scalar> QuadratureSampler<T> {
    pub fn new(state: &QuantumStateModel<T>) -> Result<Self> {
        state.validate()?;
        let fock = match state.fock_diagonal() {
            None => None,
            Some(weights) => {
                let nmax = weights.iter().map(|&(_, n)| n).max().unwrap_or(0);
                let mut bounds = vec![T::zero(); nmax + 1];
                for &(w, n) in &weights {
                    if w > T::zero() && bounds[n] == T::zero() {
                        bounds[n] = envelope_bound(n);
                    }
                }
                let mut acc = T::zero();
                let cumulative = weights
                    .iter()
                    .filter(|(w, _)| *w > T::zero())
                    .map(|&(w, n)| {
                        acc += w;
                        (acc, n)
                    })
                    .collect();
                Some(FockTables { cumulative, bounds })
            }
        };
        Ok(Self {
            state: state.clone(),
            fock,
        })
    }

    pub fn state(&self) -> &QuantumStateModel<T> {
        &self.state
    }

    pub fn sample<R: Rng + ?Sized>(&self, theta: T, rng: &mut R) -> T {
        if let Some((mean, var)) = self.state.gaussian_moments(theta) {
            return mean + var.sqrt() * T::standard_normal(rng);
        }
        let tables = self.fock.as_ref().expect("fock tables for non-gaussian state");
        let u = T::unit(rng);
        let n = tables
            .cumulative
            .iter()
            .find(|(c, _)| u < *c)
            .or(tables.cumulative.last())
            .map(|&(_, n)| n)
            .expect("mixture has at least one component");
        sample_fock(n, tables.bounds[n], rng)
    }
}

/// One draw from `|ψ_n(q)|²`.
pub fn sample_quadrature<T: Scalar, R: Rng + ?Sized>(state: &QuantumStateModel<T>, theta: T, rng: &mut R) -> Result<T> {
    if !theta.is_finite() {
        return Err(Error::invalid("theta must be finite"));
    }
    Ok(QuadratureSampler::new(state)?.sample(theta, rng))
}

fn envelope_variance<T: Scalar>(n: usize) -> T {
    T::from_usize_lossy(n) + T::lit(0.5)
}

fn envelope_density<T: Scalar>(n: usize, q: T) -> T {
    let v = envelope_variance::<T>(n);
    (-q * q / (T::lit(2.0) * v)).exp() / (T::TAU() * v).sqrt()
}

/// Numerical supremum of `|ψ_n|² / g_n` on a fine grid with a 2% margin.
fn envelope_bound<T: Scalar>(n: usize) -> T {
    if n == 0 {
        return T::one();
    }
    let w = support_half_width::<f64>(n);
    let steps = (2.0 * w / 1e-3) as usize;
    let mut best = 0.0f64;
    for i in 0..=steps {
        let q = -w + i as f64 * 1e-3;
        let g = envelope_density::<f64>(n, q);
        if g > 0.0 {
            best = best.max(fock_density(n, q) / g);
        }
    }
    T::lit(best * 1.02)
}

fn sample_fock<T: Scalar, R: Rng + ?Sized>(n: usize, bound: T, rng: &mut R) -> T {
    let sd = envelope_variance::<T>(n).sqrt();
    loop {
        let q = sd * T::standard_normal(rng);
        let accept = fock_density(n, q) / (bound * envelope_density(n, q));
        if T::unit(rng) < accept {
            return q;
        }
    }
}
