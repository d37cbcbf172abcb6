//! Truncated Fock-space numerics for the adversary's side information:
//! bipartite states, phase averaging on Alice's mode, and Eve's reduced
//! state conditioned on Alice's quadrature bin, computed in both orders
//! (phase-average then measure, or measure with phase-shifted LO then
//! average).

mod attack;

pub use attack::{run_attack, AttackReport, AttackScenario, LoMode};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::scalar::Scalar;
use crate::states::{fock_wavefunctions_into, support_half_width};

pub type CMatrix = DMatrix<Complex64>;

/// Gauss–Legendre nodes per quadrature bin.
pub const BIN_NODES: usize = 200;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Density matrix on `E ⊗ A`, row/column index `e·dim_a + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    pub dim_e: usize,
    pub dim_a: usize,
    pub rho: CMatrix,
}

impl BipartiteState {
    pub fn new(dim_e: usize, dim_a: usize, rho: CMatrix) -> Result<Self> {
        let s = Self { dim_e, dim_a, rho };
        s.validate()?;
        Ok(s)
    }

    fn unchecked(dim_e: usize, dim_a: usize, rho: CMatrix) -> Self {
        Self { dim_e, dim_a, rho }
    }

    pub fn from_pure(dim_e: usize, dim_a: usize, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != dim_e * dim_a {
            return Err(Error::LengthMismatch {
                what: "bipartite amplitude vector",
                expected: dim_e * dim_a,
                actual: psi.len(),
            });
        }
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|c| c / norm));
        Self::new(dim_e, dim_a, &v * v.adjoint())
    }

    #[inline]
    pub fn idx(&self, e: usize, a: usize) -> usize {
        e * self.dim_a + a
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim_e * self.dim_a;
        if self.dim_e == 0 || self.dim_a == 0 || self.rho.nrows() != d || self.rho.ncols() != d {
            return Err(Error::InvalidState(format!(
                "density matrix is {}x{}, dims {}x{}",
                self.rho.nrows(),
                self.rho.ncols(),
                self.dim_e,
                self.dim_a
            )));
        }
        let herm = (&self.rho - self.rho.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let min = min_eigenvalue(&self.rho);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// `tr_E ρ`.
    pub fn reduced_a(&self) -> CMatrix {
        CMatrix::from_fn(self.dim_a, self.dim_a, |a, b| {
            (0..self.dim_e)
                .map(|e| self.rho[(self.idx(e, a), self.idx(e, b))])
                .sum()
        })
    }

    /// `tr_A ρ`.
    pub fn reduced_e(&self) -> CMatrix {
        CMatrix::from_fn(self.dim_e, self.dim_e, |e, f| {
            (0..self.dim_a)
                .map(|a| self.rho[(self.idx(e, a), self.idx(f, a))])
                .sum()
        })
    }

    /// Transpose on the A factor.
    pub fn partial_transpose_a(&self) -> CMatrix {
        let d = self.dim_a;
        CMatrix::from_fn(self.rho.nrows(), self.rho.ncols(), |i, j| {
            let (e, a) = (i / d, i % d);
            let (f, b) = (j / d, j % d);
            self.rho[(self.idx(e, b), self.idx(f, a))]
        })
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `½ Σ |λ_i(A − B)|` for Hermitian `A`, `B`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a - b;
    let h = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
    0.5 * h.symmetric_eigenvalues().iter().map(|l| l.abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TmsvForm {
    /// `(1−γ²) Σ_{n,m} γ^{n+m} |n⟩⟨n|_E ⊗ |m⟩⟨m|_A`, diagonal and product-like.
    #[default]
    Printed,
    /// `|ψ⟩ = √(1−γ²) Σ_n γ^n |n⟩_E |n⟩_A`.
    Correlated,
}

/// Trace kept by truncating to `dim` levels per mode, before renormalizing.
pub fn tmsv_truncated_mass(gamma: f64, dim: usize, form: TmsvForm) -> f64 {
    match form {
        TmsvForm::Printed => (1.0 - gamma.powi(dim as i32)).powi(2),
        TmsvForm::Correlated => 1.0 - gamma.powi(2 * dim as i32),
    }
}

/// Smallest per-mode dimension keeping `1 − tol` of the trace.
pub fn tmsv_min_dim(gamma: f64, tol: f64, form: TmsvForm) -> usize {
    (1..=crate::states::MAX_FOCK_INDEX)
        .find(|&d| tmsv_truncated_mass(gamma, d, form) >= 1.0 - tol)
        .unwrap_or(crate::states::MAX_FOCK_INDEX)
}

/// Two-mode squeezed state with `γ = tanh r`, truncated and renormalized.
pub fn two_mode_squeezed(gamma: f64, dim: usize, form: TmsvForm) -> Result<BipartiteState> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must be in [0, 1), got {gamma}")));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let d = dim * dim;
    let mut rho = CMatrix::zeros(d, d);
    match form {
        TmsvForm::Printed => {
            for e in 0..dim {
                for a in 0..dim {
                    let i = e * dim + a;
                    rho[(i, i)] = Complex64::new(gamma.powi((e + a) as i32), 0.0);
                }
            }
        }
        TmsvForm::Correlated => {
            for n in 0..dim {
                for k in 0..dim {
                    rho[(n * dim + n, k * dim + k)] = Complex64::new(gamma.powi((n + k) as i32), 0.0);
                }
            }
        }
    }
    let tr = rho.trace();
    rho /= tr;
    BipartiteState::new(dim, dim, rho)
}

/// Exact uniform phase average on A: keeps only `a = a'` entries.
#[allow(non_snake_case)]
pub fn phase_average_A(state: &BipartiteState) -> BipartiteState {
    let d = state.dim_a;
    let rho = CMatrix::from_fn(state.rho.nrows(), state.rho.ncols(), |i, j| {
        if i % d == j % d {
            state.rho[(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    BipartiteState::unchecked(state.dim_e, state.dim_a, rho)
}

/// Average of `(I ⊗ U_φ) ρ (I ⊗ U_φ)†` over `m` equally spaced phases,
/// `U_φ = e^{iφ n̂}`. Equals the exact average once `m ≥ dim_a`.
#[allow(non_snake_case)]
pub fn phase_average_A_discrete(state: &BipartiteState, m: usize) -> Result<BipartiteState> {
    if m == 0 {
        return Err(Error::invalid("phase count must be positive"));
    }
    let d = state.dim_a;
    let mut acc = CMatrix::zeros(state.rho.nrows(), state.rho.ncols());
    for j in 0..m {
        let phi = std::f64::consts::TAU * j as f64 / m as f64;
        for ((r, c), v) in acc
            .iter_mut()
            .enumerate()
            .map(|(k, v)| ((k % state.rho.nrows(), k / state.rho.nrows()), v))
        {
            let diff = (r % d) as f64 - (c % d) as f64;
            *v += state.rho[(r, c)] * Complex64::from_polar(1.0, phi * diff);
        }
    }
    Ok(BipartiteState::unchecked(
        state.dim_e,
        state.dim_a,
        acc / Complex64::new(m as f64, 0.0),
    ))
}

/// Real matrix `∫_bin ψ_n(q) ψ_m(q) dq` over `(kδ − δ/2, kδ + δ/2]`.
pub fn bin_overlaps(dim: usize, delta: f64, k: i64) -> Result<DMatrix<f64>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("bin width must be positive, got {delta}")));
    }
    let centre = k as f64 * delta;
    let window: f64 = support_half_width(dim);
    if centre.abs() - delta / 2.0 > window {
        return Err(Error::invalid(format!(
            "bin {k} at q = {centre} lies outside the supported window ±{window}"
        )));
    }
    let gl = GaussLegendre::<f64>::new(BIN_NODES);
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    let mut psi = Vec::with_capacity(dim);
    for (q, w) in gl.mapped(centre - delta / 2.0, centre + delta / 2.0) {
        fock_wavefunctions_into(q, dim - 1, &mut psi);
        for n in 0..dim {
            for m in n..dim {
                out[(n, m)] += w * psi[n] * psi[m];
            }
        }
    }
    for n in 0..dim {
        for m in 0..n {
            out[(n, m)] = out[(m, n)];
        }
    }
    Ok(out)
}

/// Projector onto bin `k` of `Q_θ` on a `dim`-level mode:
/// `Π[n][m] = e^{iθ(n−m)} ∫_bin ψ_n ψ_m`.
pub fn quadrature_projector(dim: usize, theta: f64, delta: f64, k: i64) -> Result<CMatrix> {
    let o = bin_overlaps(dim, delta, k)?;
    Ok(CMatrix::from_fn(dim, dim, |n, m| {
        Complex64::from_polar(o[(n, m)], theta * (n as f64 - m as f64))
    }))
}

/// `tr_A[(I ⊗ Π) ρ]`, unnormalized.
fn conditional_e(state: &BipartiteState, pi: &CMatrix) -> CMatrix {
    let da = state.dim_a;
    CMatrix::from_fn(state.dim_e, state.dim_e, |e, f| {
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..da {
            for b in 0..da {
                s += pi[(a, b)] * state.rho[(state.idx(e, b), state.idx(f, a))];
            }
        }
        s
    })
}

/// Phase-average Alice's mode, then measure `Q_θ` and keep bin `k`.
pub fn eve_reduced_path_i(state: &BipartiteState, theta: f64, delta: f64, k: i64) -> Result<CMatrix> {
    let pi = quadrature_projector(state.dim_a, theta, delta, k)?;
    Ok(conditional_e(&phase_average_A(state), &pi))
}

/// Measure with LO phase `θ + φ_j` and average over `n_phases` phases.
pub fn eve_reduced_path_ii(state: &BipartiteState, theta: f64, delta: f64, k: i64, n_phases: usize) -> Result<CMatrix> {
    if n_phases < state.dim_a {
        return Err(Error::invalid(format!(
            "{n_phases} phases cannot resolve {} Fock levels",
            state.dim_a
        )));
    }
    let mut acc = CMatrix::zeros(state.dim_e, state.dim_e);
    for j in 0..n_phases {
        let phi = std::f64::consts::TAU * j as f64 / n_phases as f64;
        acc += conditional_e(state, &quadrature_projector(state.dim_a, theta + phi, delta, k)?);
    }
    Ok(acc / Complex64::new(n_phases as f64, 0.0))
}

/// Pure state with i.i.d. complex Gaussian amplitudes (unitarily invariant).
pub fn random_pure_state<R: Rng + ?Sized>(dim_e: usize, dim_a: usize, rng: &mut R) -> Result<BipartiteState> {
    let psi: Vec<Complex64> = (0..dim_e * dim_a)
        .map(|_| Complex64::new(f64::standard_normal(rng), f64::standard_normal(rng)))
        .collect();
    BipartiteState::from_pure(dim_e, dim_a, &psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn tmsv_vacuum_limit() {
        for form in [TmsvForm::Printed, TmsvForm::Correlated] {
            let s = two_mode_squeezed(0.0, 5, form).unwrap();
            assert_eq!(s.rho[(0, 0)], Complex64::new(1.0, 0.0));
            assert!((s.rho.iter().map(|c| c.norm()).sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(two_mode_squeezed(1.0, 5, TmsvForm::Printed).is_err());
    }

    #[test]
    fn printed_form_marginal_is_geometric() {
        let g: f64 = 0.5;
        let s = two_mode_squeezed(g, 20, TmsvForm::Printed).unwrap();
        let pa = s.reduced_a();
        let norm = (1.0 - g) / (1.0 - g.powi(20));
        for m in 0..20 {
            assert!((pa[(m, m)].re - norm * g.powi(m as i32)).abs() < 1e-15);
        }
        assert_eq!(phase_average_A(&s), s);
    }

    #[test]
    fn correlated_form_phase_averages_to_diagonal() {
        let g: f64 = 0.5;
        let dim = 30;
        assert!(tmsv_truncated_mass(g, dim, TmsvForm::Correlated) >= 1.0 - 1e-8);
        let s = two_mode_squeezed(g, dim, TmsvForm::Correlated).unwrap();
        let avg = phase_average_A(&s);
        let z = 1.0 - g.powi(2 * dim as i32);
        for i in 0..dim * dim {
            for j in 0..dim * dim {
                let want = if i == j && i / dim == i % dim {
                    (1.0 - g * g) * g.powi(2 * (i / dim) as i32) / z
                } else {
                    0.0
                };
                assert!((avg.rho[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
        // zero A-coherences and a positive partial transpose: separable
        assert!(min_eigenvalue(&avg.partial_transpose_a()) > -1e-12);
        // the pure state itself is entangled
        assert!(min_eigenvalue(&s.partial_transpose_a()) < -0.1);
    }

    #[test]
    fn tmsv_dimension_helper() {
        let d = tmsv_min_dim(0.5, 1e-8, TmsvForm::Printed);
        assert!(tmsv_truncated_mass(0.5, d, TmsvForm::Printed) >= 1.0 - 1e-8);
        assert!(tmsv_truncated_mass(0.5, d - 1, TmsvForm::Printed) < 1.0 - 1e-8);
    }

    #[test]
    fn discrete_average_matches_exact() {
        let mut rng = substream(3, "phase-avg");
        for dim in [2, 8, 16, 32] {
            let s = random_pure_state(2, dim, &mut rng).unwrap();
            let exact = phase_average_A(&s);
            let disc = phase_average_A_discrete(&s, 64).unwrap();
            assert!(max_abs(&(&exact.rho - &disc.rho)) < 1e-12, "dim {dim}");
        }
    }

    #[test]
    fn projectors_resolve_identity() {
        let dim = 6;
        let delta = 0.5;
        let mut total = CMatrix::zeros(dim, dim);
        for k in -36..=36 {
            total += quadrature_projector(dim, 0.7, delta, k).unwrap();
        }
        assert!(max_abs(&(total - CMatrix::identity(dim, dim))) < 1e-12);
        assert!(quadrature_projector(dim, 0.0, 0.5, 1000).is_err());
    }

    #[test]
    fn product_vacuum_gives_theta_independent_eve() {
        let mut psi = vec![Complex64::new(0.0, 0.0); 16];
        psi[0] = Complex64::new(1.0, 0.0);
        let s = BipartiteState::from_pure(4, 4, &psi).unwrap();
        let base = eve_reduced_path_i(&s, 0.0, 0.5, 0).unwrap();
        let p0 = crate::special::erf(0.25);
        assert!((base[(0, 0)].re - p0).abs() < 1e-14);
        assert!(max_abs(&base) - base[(0, 0)].norm() < 1e-15);
        for theta in [0.3, 1.0, 2.5] {
            let e = eve_reduced_path_ii(&s, theta, 0.5, 0, 16).unwrap();
            assert!(max_abs(&(e - &base)) < 1e-14);
        }
    }

    #[test]
    fn tmsv_eve_matrix_is_diagonal() {
        let s = two_mode_squeezed(0.4, 8, TmsvForm::Correlated).unwrap();
        let e = eve_reduced_path_i(&s, 0.0, 0.5, 1).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert!(e[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn validation_catches_bad_matrices() {
        let mut m = CMatrix::identity(4, 4) * Complex64::new(0.25, 0.0);
        assert!(BipartiteState::new(2, 2, m.clone()).is_ok());
        m[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(BipartiteState::new(2, 2, m.clone()).is_err());
        let neg = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            [0.6, 0.6, 0.1, -0.3].map(|x| Complex64::new(x, 0.0)).to_vec(),
        ));
        assert!(BipartiteState::new(2, 2, neg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn paths_agree(de in 1usize..=6, da in 1usize..=6, k in -1i64..=1, di in 0usize..3, theta in 0.0f64..6.3, salt: u64) {
            let delta = [0.1, 0.5, 1.0][di];
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(salt);
            let s = random_pure_state(de, da, &mut rng).unwrap();
            let a = eve_reduced_path_i(&s, theta, delta, k).unwrap();
            let b = eve_reduced_path_ii(&s, theta, delta, k, 4 * da).unwrap();
            prop_assert!(trace_distance(&a, &b) < 1e-10);
        }

        #[test]
        fn phase_average_idempotent(de in 1usize..=5, da in 1usize..=5, salt: u64) {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(salt);
            let s = random_pure_state(de, da, &mut rng).unwrap();
            let once = phase_average_A(&s);
            prop_assert_eq!(&phase_average_A(&once), &once);
            prop_assert!((once.trace() - s.trace()).norm() < 1e-12);
            prop_assert!(once.validate().is_ok());
        }
    }
}
