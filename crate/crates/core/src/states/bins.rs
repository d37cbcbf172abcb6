use super::{support_half_width, QuantumStateModel};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::scalar::Scalar;
use crate::special::gaussian_interval;

/// Upper limit on how many bins a single scan may visit.
pub const MAX_BIN_COUNT: usize = 50_000_000;

const NODES_PER_PANEL: usize = 24;
const MAX_PANEL_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinMax<T> {
    /// Bin index `k`; the bin is `(kδ - δ/2, kδ + δ/2]`.
    pub index: i64,
    pub probability: T,
}

/// Largest single-bin probability of the discretized quadrature.
pub fn max_bin_probability<T: Scalar>(state: &QuantumStateModel<T>, theta: T, delta: T) -> Result<T> {
    max_bin(state, theta, delta).map(|b| b.probability)
}

/// Scans every bin inside the support window and returns the most likely
/// one. Ties keep the first bin found; only the probability matters to the
/// entropy bound.
pub fn max_bin<T: Scalar>(state: &QuantumStateModel<T>, theta: T, delta: T) -> Result<BinMax<T>> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::invalid(format!("bin width must be positive, got {delta}")));
    }
    if !theta.is_finite() {
        return Err(Error::invalid("theta must be finite"));
    }
    state.validate()?;

    let (center, half_width) = match state.gaussian_moments(theta) {
        Some((mean, var)) => (mean, T::lit(8.0) + T::lit(8.0) * var.sqrt()),
        None => (T::zero(), support_half_width::<T>(state.effective_max_photons())),
    };
    let k_lo = ((center - half_width) / delta).floor();
    let k_hi = ((center + half_width) / delta).ceil();
    let count = (k_hi - k_lo).to_f64_lossy() + 1.0;
    if count > MAX_BIN_COUNT as f64 {
        return Err(Error::invalid(format!(
            "bin width {delta} needs {count:.0} bins, above the scan limit {MAX_BIN_COUNT}"
        )));
    }
    let k_lo = k_lo.to_i64().expect("bin index fits i64");
    let k_hi = k_hi.to_i64().expect("bin index fits i64");

    let half = delta * T::lit(0.5);
    let mut best = BinMax {
        index: k_lo,
        probability: T::neg_infinity(),
    };
    match state.gaussian_moments(theta) {
        Some((mean, var)) => {
            for k in k_lo..=k_hi {
                let c = T::from_i64(k).expect("bin index representable") * delta;
                let p = gaussian_interval(mean, var, c - half, c + half);
                if p > best.probability {
                    best = BinMax {
                        index: k,
                        probability: p,
                    };
                }
            }
        }
        None => {
            let weights = state.fock_diagonal().expect("non-gaussian states are Fock-diagonal");
            let nmax = state.effective_max_photons();
            let gl = GaussLegendre::<T>::new(NODES_PER_PANEL);
            let panels = (delta.to_f64_lossy() / MAX_PANEL_WIDTH).ceil().max(1.0) as usize;
            let mut psi = Vec::with_capacity(nmax + 1);
            for k in k_lo..=k_hi {
                let c = T::from_i64(k).expect("bin index representable") * delta;
                let p = gl.integrate_panels(c - half, c + half, panels, |q| {
                    super::fock_wavefunctions_into(q, nmax, &mut psi);
                    weights.iter().map(|&(w, n)| w * psi[n] * psi[n]).sum()
                });
                if p > best.probability {
                    best = BinMax {
                        index: k,
                        probability: p,
                    };
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::erf;

    type S = QuantumStateModel<f64>;

    #[test]
    fn vacuum_central_bin() {
        let b = max_bin(&S::Vacuum, 0.4, 0.5).unwrap();
        assert_eq!(b.index, 0);
        assert_eq!(b.probability, erf(0.25));
        assert!((b.probability - 0.276326).abs() < 1e-6);
    }

    #[test]
    fn vacuum_via_fock_path_matches_closed_form() {
        // Fock(0) goes through numerical integration, Vacuum through erf
        for &d in &[0.01, 0.1, 0.5, 1.0, 2.0] {
            let a = max_bin_probability(&S::Fock(0), 0.0, d).unwrap();
            assert!((a - erf(d / 2.0)).abs() < 1e-13, "δ={d}: {a}");
        }
    }

    #[test]
    fn single_photon_below_vacuum() {
        let p1 = max_bin_probability(&S::Fock(1), 1.0, 0.5).unwrap();
        assert!(p1 < 0.276326);
        // independent estimate: |ψ_1|² peaks at q = ±1 with value 2/(e√π)
        let peak = 2.0 / (std::f64::consts::E * std::f64::consts::PI.sqrt());
        assert!(p1 < peak * 0.5 && p1 > 0.9 * peak * 0.5, "{p1}");
    }

    #[test]
    fn rejects_nonpositive_delta() {
        assert!(max_bin_probability(&S::Vacuum, 0.0, 0.0).is_err());
        assert!(max_bin_probability(&S::Vacuum, 0.0, -1.0).is_err());
        assert!(max_bin_probability(&S::Vacuum, 0.0, 1e-9).is_err());
    }

    #[test]
    fn displaced_state_bin_follows_mean() {
        let s = S::DisplacedSqueezed {
            r: 1.0,
            squeeze_angle: 0.0,
            displacement: num_complex::Complex::new(3.0 / 2f64.sqrt(), 0.0),
        };
        let b = max_bin(&s, 0.0, 0.5).unwrap();
        assert_eq!(b.index, 6);
    }
}
