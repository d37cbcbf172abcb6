//! Quadrature statistics of single-mode states written in the Fock basis.
//!
//! Conventions: `[a, a†] = 1`, `Q_θ = (a e^{-iθ} + a† e^{iθ})/√2`, so the
//! vacuum quadrature variance is 1/2 and every bin width `δ` elsewhere in
//! the crate is measured in these vacuum units.

mod bins;
mod sampler;
mod wavefunction;

pub use bins::{max_bin, max_bin_probability, BinMax, MAX_BIN_COUNT};
pub use sampler::{sample_quadrature, QuadratureSampler};
pub use wavefunction::{fock_density, fock_wavefunctions, fock_wavefunctions_into, support_half_width};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Scalar};

/// Largest Fock index accepted anywhere in the model.
pub const MAX_FOCK_INDEX: usize = 4096;

/// Default truncation used when a thermal state is expanded in Fock states.
pub const DEFAULT_FOCK_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumStateModel<T> {
    Vacuum,
    Fock(usize),
    DisplacedSqueezed {
        r: T,
        /// Axis of the squeezed quadrature.
        squeeze_angle: T,
        displacement: Complex<T>,
    },
    Thermal {
        mean_photons: T,
    },
    Mixture(FockMixture<T>),
}

/// Classical mixture `Σ p_n |n⟩⟨n|`. Construct with [`FockMixture::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockMixture<T> {
    components: Vec<(T, usize)>,
    max_index: usize,
}

impl<T: Scalar> FockMixture<T> {
    pub fn new(components: Vec<(T, usize)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidState("empty Fock mixture".into()));
        }
        let mut total = T::zero();
        let mut max_index = 0;
        for &(p, n) in &components {
            if !p.is_finite() || p < T::zero() {
                return Err(Error::InvalidState(format!("mixture weight {p} not a probability")));
            }
            if n > MAX_FOCK_INDEX {
                return Err(Error::InvalidState(format!("Fock index {n} exceeds {MAX_FOCK_INDEX}")));
            }
            total += p;
            max_index = max_index.max(n);
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::from_usize_lossy(4 * components.len()));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidState(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components, max_index })
    }

    pub fn components(&self) -> &[(T, usize)] {
        &self.components
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    /// Dense photon-number distribution `p[0..=max_index]`.
    pub fn photon_distribution(&self) -> Vec<T> {
        let mut p = vec![T::zero(); self.max_index + 1];
        for &(w, n) in &self.components {
            p[n] += w;
        }
        p
    }
}

/// A quadrature evaluation point with the LO phase reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureQuery<T> {
    pub theta: T,
    pub q: T,
}

impl<T: Scalar> QuadratureQuery<T> {
    pub fn new(theta: T, q: T) -> Result<Self> {
        if !theta.is_finite() || !q.is_finite() {
            return Err(Error::invalid("quadrature query must be finite"));
        }
        Ok(Self {
            theta: wrap_angle(theta),
            q,
        })
    }
}

impl<T: Scalar> QuantumStateModel<T> {
    pub fn mixture(components: Vec<(T, usize)>) -> Result<Self> {
        FockMixture::new(components).map(Self::Mixture)
    }

    pub fn squeezed_vacuum(r: T, squeeze_angle: T) -> Self {
        Self::DisplacedSqueezed {
            r,
            squeeze_angle,
            displacement: Complex::new(T::zero(), T::zero()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Vacuum => Ok(()),
            Self::Fock(n) if *n > MAX_FOCK_INDEX => {
                Err(Error::InvalidState(format!("Fock index {n} exceeds {MAX_FOCK_INDEX}")))
            }
            Self::Fock(_) => Ok(()),
            Self::DisplacedSqueezed {
                r,
                squeeze_angle,
                displacement,
            } => {
                if r.is_finite()
                    && squeeze_angle.is_finite()
                    && displacement.re.is_finite()
                    && displacement.im.is_finite()
                {
                    Ok(())
                } else {
                    Err(Error::InvalidState("non-finite squeezing parameters".into()))
                }
            }
            Self::Thermal { mean_photons } => {
                if mean_photons.is_finite() && *mean_photons >= T::zero() {
                    Ok(())
                } else {
                    Err(Error::InvalidState(format!(
                        "thermal mean photon number {mean_photons}"
                    )))
                }
            }
            // validated on construction
            Self::Mixture(_) => Ok(()),
        }
    }

    /// Mean and variance of `Q_θ` when the outcome distribution is Gaussian.
    pub fn gaussian_moments(&self, theta: T) -> Option<(T, T)> {
        let half = T::lit(0.5);
        match self {
            Self::Vacuum => Some((T::zero(), half)),
            Self::Thermal { mean_photons } => Some((T::zero(), (T::lit(2.0) * *mean_photons + T::one()) * half)),
            Self::DisplacedSqueezed {
                r,
                squeeze_angle,
                displacement,
            } => {
                let mean = T::SQRT_2() * (displacement.re * theta.cos() + displacement.im * theta.sin());
                let rel = theta - *squeeze_angle;
                let (s, c) = rel.sin_cos();
                let two_r = T::lit(2.0) * *r;
                let var = ((-two_r).exp() * c * c + two_r.exp() * s * s) * half;
                Some((mean, var))
            }
            Self::Fock(_) | Self::Mixture(_) => None,
        }
    }

    /// Photon-number distribution for Fock-diagonal states.
    pub fn fock_diagonal(&self) -> Option<Vec<(T, usize)>> {
        match self {
            Self::Vacuum => Some(vec![(T::one(), 0)]),
            Self::Fock(n) => Some(vec![(T::one(), *n)]),
            Self::Mixture(m) => Some(m.components().to_vec()),
            _ => None,
        }
    }

    /// Exact quadrature probability density `⟨q_θ|ρ|q_θ⟩`.
    pub fn quadrature_pdf(&self, theta: T, q: T) -> Result<T> {
        if !q.is_finite() || !theta.is_finite() {
            return Err(Error::invalid("quadrature pdf needs finite theta and q"));
        }
        self.validate()?;
        Ok(self.pdf_unchecked(theta, q))
    }

    pub(crate) fn pdf_unchecked(&self, theta: T, q: T) -> T {
        if let Some((mean, var)) = self.gaussian_moments(theta) {
            let d = q - mean;
            return (-d * d / (T::lit(2.0) * var)).exp() / (T::TAU() * var).sqrt();
        }
        match self {
            Self::Fock(n) => fock_density(*n, q),
            Self::Mixture(m) => {
                let psi = fock_wavefunctions(q, m.max_index());
                m.components().iter().map(|&(p, n)| p * psi[n] * psi[n]).sum()
            }
            _ => unreachable!("gaussian states handled above"),
        }
    }

    /// Largest photon number with non-negligible weight, used to size
    /// integration windows.
    pub(crate) fn effective_max_photons(&self) -> usize {
        match self {
            Self::Vacuum => 0,
            Self::Fock(n) => *n,
            Self::Mixture(m) => m.max_index(),
            Self::Thermal { .. } | Self::DisplacedSqueezed { .. } => 0,
        }
    }
}

/// Thermal state expanded as a geometric Fock mixture truncated to `dim`
/// levels and renormalized.
pub fn thermal_as_mixture<T: Scalar>(mean_photons: T, dim: usize) -> Result<QuantumStateModel<T>> {
    if !(mean_photons >= T::zero()) || dim == 0 {
        return Err(Error::InvalidState(
            "thermal expansion needs n̄ >= 0 and dim >= 1".into(),
        ));
    }
    let ratio = mean_photons / (T::one() + mean_photons);
    let mut weights: Vec<T> = (0..dim).map(|n| ratio.powi(n as i32)).collect();
    let total: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w /= total;
    }
    QuantumStateModel::mixture(weights.into_iter().enumerate().map(|(n, w)| (w, n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use std::f64::consts::PI;

    type S = QuantumStateModel<f64>;

    fn integrate(state: &S, theta: f64, lo: f64, hi: f64) -> f64 {
        let gl = GaussLegendre::new(40);
        let panels = ((hi - lo) / 0.25).ceil() as usize;
        gl.integrate_panels(lo, hi, panels, |q| state.pdf_unchecked(theta, q))
    }

    #[test]
    fn vacuum_peak() {
        let v = S::Vacuum.quadrature_pdf(0.0, 0.0).unwrap();
        assert!((v - 1.0 / PI.sqrt()).abs() < 1e-15);
        for &(t, q) in &[(0.3f64, 0.8f64), (2.0, -1.5)] {
            let want = (-q * q).exp() / PI.sqrt();
            assert!((S::Vacuum.quadrature_pdf(t, q).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn single_photon_vanishes_at_origin() {
        for &t in &[0.0, 1.0, 4.0] {
            assert_eq!(S::Fock(1).quadrature_pdf(t, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn squeezed_anti_squeezed_quadrature() {
        let s = S::squeezed_vacuum(0.5, 0.0);
        let got = s.quadrature_pdf(PI / 2.0, 0.0).unwrap();
        let var = (1.0f64).exp() / 2.0;
        let want = 1.0 / (2.0 * PI * var).sqrt();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(S::Vacuum.quadrature_pdf(0.0, f64::NAN).is_err());
        assert!(S::Thermal { mean_photons: -1.0 }.quadrature_pdf(0.0, 0.0).is_err());
        assert!(S::Fock(MAX_FOCK_INDEX + 1).quadrature_pdf(0.0, 0.0).is_err());
        assert!(S::mixture(vec![(0.5, 0), (0.4, 1)]).is_err());
        assert!(S::mixture(vec![(1.2, 0), (-0.2, 1)]).is_err());
        assert!(S::mixture(vec![]).is_err());
        assert!(QuadratureQuery::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn query_wraps_theta() {
        let q = QuadratureQuery::new(-PI / 2.0, 1.0).unwrap();
        assert!((q.theta - 1.5 * PI).abs() < 1e-15);
    }

    #[test]
    fn normalization_every_variant() {
        let states = vec![
            S::Vacuum,
            S::Fock(1),
            S::Fock(7),
            S::Fock(20),
            S::DisplacedSqueezed {
                r: 0.8,
                squeeze_angle: 0.4,
                displacement: Complex::new(1.0, -0.5),
            },
            S::Thermal { mean_photons: 1.3 },
            S::mixture(vec![(0.2, 0), (0.5, 3), (0.3, 12)]).unwrap(),
        ];
        for s in &states {
            for &theta in &[0.0, 1.1] {
                let w = 30.0;
                let total = integrate(s, theta, -w, w);
                assert!((total - 1.0).abs() < 1e-9, "{s:?} θ={theta}: {total}");
            }
        }
    }

    #[test]
    fn fock_phase_invariance() {
        for n in [0usize, 1, 5, 13] {
            for &q in &[-1.7, 0.2, 2.9] {
                let a = S::Fock(n).quadrature_pdf(0.0, q).unwrap();
                let b = S::Fock(n).quadrature_pdf(2.3, q).unwrap();
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_is_linear() {
        let comps = vec![(0.25, 0), (0.35, 2), (0.4, 9)];
        let m = S::mixture(comps.clone()).unwrap();
        for &q in &[-3.0, -0.4, 0.0, 1.25, 4.0] {
            let direct = m.quadrature_pdf(0.7, q).unwrap();
            let sum: f64 = comps
                .iter()
                .map(|&(p, n)| p * S::Fock(n).quadrature_pdf(0.0, q).unwrap())
                .sum();
            assert!((direct - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_variance_from_fock_expansion() {
        // the Gaussian closed form and the truncated geometric mixture must agree
        let m = thermal_as_mixture(1.0, DEFAULT_FOCK_DIM).unwrap();
        let gl = GaussLegendre::new(40);
        let var: f64 = gl.integrate_panels(-40.0, 40.0, 320, |q| q * q * m.pdf_unchecked(0.0, q));
        assert!((var - 1.5).abs() < 1e-6, "{var}");
        for &q in &[0.0, 0.9, -2.2] {
            let a = m.quadrature_pdf(0.0, q).unwrap();
            let b = S::Thermal { mean_photons: 1.0 }.quadrature_pdf(0.0, q).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn generic_over_f32() {
        let v = QuantumStateModel::<f32>::Vacuum.quadrature_pdf(0.0, 0.0).unwrap();
        assert!((v - 0.5641896).abs() < 1e-6);
    }
}
