//! GF(2) Toeplitz matrix-vector products.
//!
//! `T[i][j] = seed[i + n - 1 - j]`, so output bit `i` is the parity of the
//! seed window `seed[i..i+n]` ANDed with the input reversed. The fast path
//! keeps 64 copies of the seed packed at every bit offset, which turns each
//! window into an aligned word slice.

use crate::error::{Error, Result};

/// Reusable hasher for fixed `(n, m)` and seed.
#[derive(Debug, Clone)]
pub struct ToeplitzHasher {
    n: usize,
    m: usize,
    words: usize,
    shifted: Vec<Vec<u64>>,
}

fn pack_lsb(bits: &[u8], offset: usize, n_words: usize) -> Vec<u64> {
    let mut out = vec![0u64; n_words];
    for (k, &b) in bits.iter().skip(offset).enumerate() {
        if k / 64 >= n_words {
            break;
        }
        out[k / 64] |= u64::from(b & 1) << (k % 64);
    }
    out
}

impl ToeplitzHasher {
    pub fn new(seed: &[u8], n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("Toeplitz dimensions must be positive"));
        }
        check_seed(seed.len(), n, m)?;
        let words = n.div_ceil(64);
        // copy s serves windows starting at i ≡ s (mod 64)
        let total = (seed.len() / 64) + words + 2;
        let shifted = (0..64.min(seed.len())).map(|s| pack_lsb(seed, s, total)).collect();
        Ok(Self { n, m, words, shifted })
    }

    pub fn input_bits(&self) -> usize {
        self.n
    }

    pub fn output_bits(&self) -> usize {
        self.m
    }

    /// Hashes `n` input bits (values 0/1) into `m` output bits.
    pub fn hash(&self, input: &[u8]) -> Result<Vec<u8>> {
        if input.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "Toeplitz input bits",
                expected: self.n,
                actual: input.len(),
            });
        }
        let mut rev = vec![0u64; self.words];
        for (k, &b) in input.iter().rev().enumerate() {
            rev[k / 64] |= u64::from(b & 1) << (k % 64);
        }
        Ok((0..self.m)
            .map(|i| {
                let copy = &self.shifted[i % 64][i / 64..i / 64 + self.words];
                let acc = copy.iter().zip(&rev).fold(0u64, |acc, (s, x)| acc ^ (s & x));
                (acc.count_ones() & 1) as u8
            })
            .collect())
    }
}

fn check_seed(len: usize, n: usize, m: usize) -> Result<()> {
    if len != n + m - 1 {
        return Err(Error::LengthMismatch {
            what: "Toeplitz seed bits",
            expected: n + m - 1,
            actual: len,
        });
    }
    Ok(())
}

pub fn toeplitz_hash(input: &[u8], seed: &[u8], m: usize) -> Result<Vec<u8>> {
    ToeplitzHasher::new(seed, input.len(), m)?.hash(input)
}

/// Straight double loop over the matrix definition.
pub fn toeplitz_hash_reference(input: &[u8], seed: &[u8], m: usize) -> Result<Vec<u8>> {
    let n = input.len();
    if n == 0 || m == 0 {
        return Err(Error::invalid("Toeplitz dimensions must be positive"));
    }
    check_seed(seed.len(), n, m)?;
    Ok((0..m)
        .map(|i| (0..n).fold(0u8, |acc, j| acc ^ (seed[i + n - 1 - j] & input[j] & 1)))
        .collect())
}
