use crate::scalar::Scalar;

/// Fills `out[n] = ψ_n(q)` for `n = 0..=nmax`, the normalized Fock-state
/// quadrature wavefunctions in the convention where the vacuum variance is
/// 1/2. The recurrence runs on the normalized functions so no `2^n n!`
/// factor is ever formed.
pub fn fock_wavefunctions_into<T: Scalar>(q: T, nmax: usize, out: &mut Vec<T>) {
    out.clear();
    out.reserve(nmax + 1);
    let psi0 = T::PI().powf(T::lit(-0.25)) * (-q * q * T::lit(0.5)).exp();
    out.push(psi0);
    if nmax == 0 {
        return;
    }
    let two = T::lit(2.0);
    out.push(two.sqrt() * q * psi0);
    for n in 1..nmax {
        let nf = T::from_usize_lossy(n);
        let np1 = nf + T::one();
        let next = (two / np1).sqrt() * q * out[n] - (nf / np1).sqrt() * out[n - 1];
        out.push(next);
    }
}

pub fn fock_wavefunctions<T: Scalar>(q: T, nmax: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(nmax + 1);
    fock_wavefunctions_into(q, nmax, &mut v);
    v
}

/// `|ψ_n(q)|²`.
pub fn fock_density<T: Scalar>(n: usize, q: T) -> T {
    let v = fock_wavefunctions(q, n);
    v[n] * v[n]
}

/// Half-width of the quadrature window that holds essentially all of the
/// probability mass of Fock states up to `n`.
pub fn support_half_width<T: Scalar>(n: usize) -> T {
    T::lit(8.0) + T::lit(4.0) * T::from_usize_lossy(n + 1).sqrt()
}
