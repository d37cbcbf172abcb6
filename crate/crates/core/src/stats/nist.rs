//! Individual SP 800-22 tests on unpacked bit strings (`0`/`1` bytes).
//! Parameters follow the reference implementation's defaults.

use rustfft::{num_complex::Complex64, FftPlanner};

use super::gof::igamc;
use crate::error::{Error, Result};
use crate::special::{erfc, normal_cdf};

fn need(bits: &[u8], min: usize, test: &str) -> Result<()> {
    if bits.len() < min {
        Err(Error::InsufficientData(format!(
            "{test} needs at least {min} bits, got {}",
            bits.len()
        )))
    } else {
        Ok(())
    }
}

pub fn frequency(bits: &[u8]) -> Result<f64> {
    need(bits, 1, "frequency")?;
    let n = bits.len() as f64;
    let s: i64 = bits.iter().map(|&b| if b == 1 { 1 } else { -1 }).sum();
    Ok(erfc((s.abs() as f64 / n.sqrt()) / std::f64::consts::SQRT_2))
}

pub fn block_frequency(bits: &[u8], block_len: usize) -> Result<f64> {
    need(bits, block_len.max(1), "block frequency")?;
    let blocks = bits.len() / block_len;
    let chi2: f64 = bits
        .chunks_exact(block_len)
        .map(|c| {
            let pi = c.iter().map(|&b| b as f64).sum::<f64>() / block_len as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * block_len as f64;
    Ok(igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

pub fn runs(bits: &[u8]) -> Result<f64> {
    need(bits, 2, "runs")?;
    let n = bits.len() as f64;
    let pi = bits.iter().map(|&b| b as f64).sum::<f64>() / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Ok(0.0);
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
    Ok(erfc(num / den))
}

/// Longest run of ones in a block.
pub fn longest_run(bits: &[u8]) -> Result<f64> {
    need(bits, 128, "longest run")?;
    let n = bits.len();
    let (m, lo, pi): (usize, usize, &[f64]) = if n < 6272 {
        (8, 1, &[0.21484375, 0.3671875, 0.23046875, 0.1875])
    } else if n < 750_000 {
        (
            128,
            4,
            &[
                0.1174035788,
                0.242955959,
                0.249363483,
                0.17517706,
                0.102701071,
                0.112398847,
            ],
        )
    } else {
        (10_000, 10, &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    };
    let k = pi.len() - 1;
    let mut counts = vec![0u64; pi.len()];
    let blocks = n / m;
    for block in bits.chunks_exact(m) {
        let mut best = 0usize;
        let mut run = 0usize;
        for &b in block {
            if b == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        let idx = best.clamp(lo, lo + k) - lo;
        counts[idx] += 1;
    }
    let nb = blocks as f64;
    let chi2: f64 = counts
        .iter()
        .zip(pi)
        .map(|(&c, &p)| (c as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    Ok(igamc(k as f64 / 2.0, chi2 / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

pub fn cumulative_sums(bits: &[u8], dir: Direction) -> Result<f64> {
    need(bits, 1, "cumulative sums")?;
    let n = bits.len() as i64;
    let mut s = 0i64;
    let mut z = 0i64;
    let step = |b: u8| if b == 1 { 1 } else { -1 };
    match dir {
        Direction::Forward => {
            for &b in bits {
                s += step(b);
                z = z.max(s.abs());
            }
        }
        Direction::Backward => {
            for &b in bits.iter().rev() {
                s += step(b);
                z = z.max(s.abs());
            }
        }
    }
    let zf = z as f64;
    let sq = (n as f64).sqrt();
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum1 += normal_cdf((4.0 * kf + 1.0) * zf / sq) - normal_cdf((4.0 * kf - 1.0) * zf / sq);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum2 += normal_cdf((4.0 * kf + 3.0) * zf / sq) - normal_cdf((4.0 * kf + 1.0) * zf / sq);
        k += 1;
    }
    Ok((1.0 - sum1 + sum2).clamp(0.0, 1.0))
}

/// Discrete Fourier transform (spectral) test.
pub fn fft_spectral(bits: &[u8]) -> Result<f64> {
    need(bits, 2, "fft")?;
    let n = bits.len();
    let mut buf: Vec<Complex64> = bits
        .iter()
        .map(|&b| Complex64::new(if b == 1 { 1.0 } else { -1.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let threshold = ((1.0f64 / 0.05).ln() * nf).sqrt();
    let n0 = 0.95 * nf / 2.0;
    let n1 = buf[..n / 2].iter().filter(|c| c.norm() < threshold).count() as f64;
    let d = (n1 - n0) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    Ok(erfc(d.abs() / std::f64::consts::SQRT_2))
}

/// Overlapping pattern counts of length `m` with wrap-around.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<u64> {
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        return counts;
    }
    let mask = (1usize << m) - 1;
    let mut word = 0usize;
    for i in 0..m - 1 {
        word = (word << 1) | bits[i % n] as usize;
    }
    for i in 0..n {
        word = ((word << 1) | bits[(i + m - 1) % n] as usize) & mask;
        counts[word] += 1;
    }
    counts
}

pub fn approximate_entropy(bits: &[u8], m: usize) -> Result<f64> {
    need(bits, m + 2, "approximate entropy")?;
    let n = bits.len() as f64;
    let phi = |len: usize| -> f64 {
        pattern_counts(bits, len)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum()
    };
    let apen = phi(m) - phi(m + 1);
    let chi2 = 2.0 * n * (std::f64::consts::LN_2 - apen);
    Ok(igamc((1u64 << m) as f64 / 2.0, chi2 / 2.0))
}

/// Serial test; returns both p-values `(∇ψ², ∇²ψ²)`.
pub fn serial(bits: &[u8], m: usize) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::invalid("serial test needs m >= 2"));
    }
    need(bits, m + 1, "serial")?;
    let n = bits.len() as f64;
    let psi2 = |len: usize| -> f64 {
        if len == 0 {
            return 0.0;
        }
        let s: f64 = pattern_counts(bits, len).iter().map(|&c| (c as f64).powi(2)).sum();
        s * (1u64 << len) as f64 / n - n
    };
    let (a, b, c) = (psi2(m), psi2(m - 1), psi2(m - 2));
    let del1 = a - b;
    let del2 = a - 2.0 * b + c;
    Ok((
        igamc((1u64 << (m - 1)) as f64 / 2.0, del1 / 2.0),
        igamc((1u64 << (m - 2)) as f64 / 2.0, del2 / 2.0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Vec<u8> {
        s.bytes().map(|c| c - b'0').collect()
    }

    #[test]
    fn pattern_counts_wrap() {
        // 0011011101 with m = 3: 001 1, 011 2, 101 2, 110 2, 111 1, 010 1, 100 1
        let c = pattern_counts(&parse("0011011101"), 3);
        assert_eq!(c, vec![0, 1, 1, 2, 1, 2, 2, 1]);
    }

    #[test]
    fn degenerate_streams() {
        let zeros = vec![0u8; 1000];
        assert!(frequency(&zeros).unwrap() < 1e-100);
        assert_eq!(runs(&zeros).unwrap(), 0.0);
        assert!(longest_run(&zeros[..100]).is_err());
        assert!(serial(&zeros, 1).is_err());
    }
}
