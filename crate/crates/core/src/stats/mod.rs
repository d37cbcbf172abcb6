//! Statistical validation of extractor output: a subset of the NIST
//! SP 800-22 battery with pass-proportion and p-value uniformity
//! aggregation, plus goodness-of-fit helpers used elsewhere.

pub mod gof;
pub mod nist;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

pub use gof::{chi_square_counts, chi_square_pvalue, ks_one_sample, ks_two_sample, KsResult};
pub use nist::Direction;

use crate::error::{Error, Result};
use crate::fsio;

/// Per-string significance level.
pub const ALPHA: f64 = 0.01;
/// Second-level uniformity threshold on the p-value histogram.
pub const UNIFORMITY_THRESHOLD: f64 = 0.0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestId {
    Frequency,
    BlockFrequency,
    CumulativeSumsForward,
    CumulativeSumsBackward,
    Runs,
    LongestRun,
    Rank,
    Fft,
    NonOverlappingTemplate,
    OverlappingTemplate,
    Universal,
    ApproximateEntropy,
    RandomExcursions,
    RandomExcursionsVariant,
    Serial1,
    Serial2,
    LinearComplexity,
}

impl TestId {
    /// Rows in the order of the usual battery summary table.
    pub const ALL: [TestId; 17] = [
        TestId::Frequency,
        TestId::BlockFrequency,
        TestId::CumulativeSumsForward,
        TestId::CumulativeSumsBackward,
        TestId::Runs,
        TestId::LongestRun,
        TestId::Rank,
        TestId::Fft,
        TestId::NonOverlappingTemplate,
        TestId::OverlappingTemplate,
        TestId::Universal,
        TestId::ApproximateEntropy,
        TestId::RandomExcursions,
        TestId::RandomExcursionsVariant,
        TestId::Serial1,
        TestId::Serial2,
        TestId::LinearComplexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestId::Frequency => "Frequency",
            TestId::BlockFrequency => "Block Frequency",
            TestId::CumulativeSumsForward => "Cumulative Sums (forward)",
            TestId::CumulativeSumsBackward => "Cumulative Sums (backward)",
            TestId::Runs => "Runs",
            TestId::LongestRun => "Longest Run",
            TestId::Rank => "Rank",
            TestId::Fft => "FFT",
            TestId::NonOverlappingTemplate => "Non Overlapping Template",
            TestId::OverlappingTemplate => "Overlapping Template",
            TestId::Universal => "Universal",
            TestId::ApproximateEntropy => "Approximate Entropy",
            TestId::RandomExcursions => "Random Excursions",
            TestId::RandomExcursionsVariant => "Random Excursions Variant",
            TestId::Serial1 => "Serial (del1)",
            TestId::Serial2 => "Serial (del2)",
            TestId::LinearComplexity => "Linear Complexity",
        }
    }

    /// Lower-case identifier used in config files.
    pub fn key(self) -> &'static str {
        match self {
            TestId::Frequency => "frequency",
            TestId::BlockFrequency => "block_frequency",
            TestId::CumulativeSumsForward => "cusum_forward",
            TestId::CumulativeSumsBackward => "cusum_backward",
            TestId::Runs => "runs",
            TestId::LongestRun => "longest_run",
            TestId::Rank => "rank",
            TestId::Fft => "fft",
            TestId::NonOverlappingTemplate => "non_overlapping_template",
            TestId::OverlappingTemplate => "overlapping_template",
            TestId::Universal => "universal",
            TestId::ApproximateEntropy => "approximate_entropy",
            TestId::RandomExcursions => "random_excursions",
            TestId::RandomExcursionsVariant => "random_excursions_variant",
            TestId::Serial1 => "serial1",
            TestId::Serial2 => "serial2",
            TestId::LinearComplexity => "linear_complexity",
        }
    }

    pub fn implemented(self) -> bool {
        !matches!(
            self,
            TestId::Rank
                | TestId::NonOverlappingTemplate
                | TestId::OverlappingTemplate
                | TestId::Universal
                | TestId::RandomExcursions
                | TestId::RandomExcursionsVariant
                | TestId::LinearComplexity
        )
    }

    pub fn implemented_tests() -> Vec<TestId> {
        Self::ALL.into_iter().filter(|t| t.implemented()).collect()
    }
}

/// Test parameters derived from the string length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatteryParams {
    pub block_frequency_len: usize,
    pub approximate_entropy_m: usize,
    pub serial_m: usize,
}

impl BatteryParams {
    /// Reference defaults (M = 128, m = 10, m = 16), reduced where the
    /// string is too short for them to be valid.
    pub fn for_length(n: usize) -> Self {
        let log2n = (usize::BITS - 1 - n.max(2).leading_zeros()) as usize;
        Self {
            block_frequency_len: 128.min((n / 100).max(20)),
            approximate_entropy_m: 10.min(log2n.saturating_sub(6)).max(2),
            serial_m: 16.min(log2n.saturating_sub(3)).max(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestOutcome {
    Ran {
        test: TestId,
        p_values: Vec<f64>,
        proportion: f64,
        uniformity_p: f64,
        /// Proportion at or above the three-sigma bound.
        passed: bool,
    },
    Unimplemented(TestId),
}

impl TestOutcome {
    pub fn test(&self) -> TestId {
        match self {
            TestOutcome::Ran { test, .. } | TestOutcome::Unimplemented(test) => *test,
        }
    }

    pub fn passed(&self) -> Option<bool> {
        match self {
            TestOutcome::Ran { passed, .. } => Some(*passed),
            TestOutcome::Unimplemented(_) => None,
        }
    }

    pub fn proportion(&self) -> Option<f64> {
        match self {
            TestOutcome::Ran { proportion, .. } => Some(*proportion),
            TestOutcome::Unimplemented(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryReport {
    pub n_strings: usize,
    pub string_length: usize,
    pub params: BatteryParams,
    pub proportion_bound: f64,
    pub outcomes: Vec<TestOutcome>,
}

/// Minimum acceptable pass proportion: `p̂ - 3√(p̂(1-p̂)/k)` with `p̂ = 1 - α`.
pub fn proportion_bound(n_strings: usize) -> f64 {
    let p = 1.0 - ALPHA;
    p - 3.0 * (p * (1.0 - p) / n_strings as f64).sqrt()
}

/// χ² uniformity of p-values over ten equal bins.
pub fn uniformity_pvalue(p_values: &[f64]) -> f64 {
    let mut bins = [0u64; 10];
    for &p in p_values {
        bins[((p * 10.0) as usize).min(9)] += 1;
    }
    chi_square_counts(&bins, &[0.1; 10]).1
}

fn run_one(test: TestId, bits: &[u8], params: &BatteryParams) -> Result<f64> {
    match test {
        TestId::Frequency => nist::frequency(bits),
        TestId::BlockFrequency => nist::block_frequency(bits, params.block_frequency_len),
        TestId::CumulativeSumsForward => nist::cumulative_sums(bits, Direction::Forward),
        TestId::CumulativeSumsBackward => nist::cumulative_sums(bits, Direction::Backward),
        TestId::Runs => nist::runs(bits),
        TestId::LongestRun => nist::longest_run(bits),
        TestId::Fft => nist::fft_spectral(bits),
        TestId::ApproximateEntropy => nist::approximate_entropy(bits, params.approximate_entropy_m),
        TestId::Serial1 => nist::serial(bits, params.serial_m).map(|p| p.0),
        TestId::Serial2 => nist::serial(bits, params.serial_m).map(|p| p.1),
        other => Err(Error::invalid(format!("{} is not implemented", other.name()))),
    }
}

/// Unpacks MSB-first bytes into `0`/`1` values.
pub fn unpack_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Runs the selected tests on `n_strings` consecutive strings of
/// `string_length` bits each.
pub fn run_battery(bits: &[u8], n_strings: usize, string_length: usize, tests: &[TestId]) -> Result<BatteryReport> {
    if n_strings == 0 || string_length == 0 {
        return Err(Error::invalid("battery needs at least one non-empty string"));
    }
    let needed = n_strings
        .checked_mul(string_length)
        .ok_or_else(|| Error::invalid("battery size overflows"))?;
    if bits.len() < needed {
        return Err(Error::InsufficientData(format!(
            "battery needs {needed} bits ({n_strings} × {string_length}), got {}",
            bits.len()
        )));
    }
    let params = BatteryParams::for_length(string_length);
    let bound = proportion_bound(n_strings);
    let strings: Vec<&[u8]> = bits[..needed].chunks_exact(string_length).collect();
    let mut outcomes = Vec::with_capacity(tests.len());
    for &test in tests {
        if !test.implemented() {
            outcomes.push(TestOutcome::Unimplemented(test));
            continue;
        }
        let p_values = strings
            .par_iter()
            .map(|s| run_one(test, s, &params).map(|p| p.clamp(0.0, 1.0)))
            .collect::<Result<Vec<f64>>>()?;
        let proportion = p_values.iter().filter(|&&p| p >= ALPHA).count() as f64 / n_strings as f64;
        outcomes.push(TestOutcome::Ran {
            test,
            uniformity_p: uniformity_pvalue(&p_values),
            proportion,
            passed: proportion >= bound,
            p_values,
        });
    }
    Ok(BatteryReport {
        n_strings,
        string_length,
        params,
        proportion_bound: bound,
        outcomes,
    })
}

impl BatteryReport {
    pub fn all_implemented_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed() != Some(false))
    }

    /// Aligned table: test, uniformity p-value, proportion, result.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} strings x {} bits, proportion bound {:.4}",
            self.n_strings, self.string_length, self.proportion_bound
        );
        let _ = writeln!(
            s,
            "{:<28} {:>8} {:>11}  Result",
            "Statistical test", "P value", "Proportion"
        );
        for o in &self.outcomes {
            match o {
                TestOutcome::Ran {
                    test,
                    proportion,
                    uniformity_p,
                    passed,
                    ..
                } => {
                    let _ = writeln!(
                        s,
                        "{:<28} {:>8.3} {:>11.3}  {}",
                        test.name(),
                        uniformity_p,
                        proportion,
                        if *passed { "Success" } else { "Failure" }
                    );
                }
                TestOutcome::Unimplemented(test) => {
                    let _ = writeln!(s, "{:<28} {:>8} {:>11}  Unimplemented", test.name(), "-", "-");
                }
            }
        }
        s
    }

    pub fn render_csv(&self) -> String {
        let mut s = String::from("test,p_value,proportion,result\n");
        for o in &self.outcomes {
            match o {
                TestOutcome::Ran {
                    test,
                    proportion,
                    uniformity_p,
                    passed,
                    ..
                } => {
                    let _ = writeln!(
                        s,
                        "{},{:.6},{:.6},{}",
                        test.name(),
                        uniformity_p,
                        proportion,
                        if *passed { "Success" } else { "Failure" }
                    );
                }
                TestOutcome::Unimplemented(test) => {
                    let _ = writeln!(s, "{},,,Unimplemented", test.name());
                }
            }
        }
        s
    }
}

/// Histogram density of `samples` on `bins` equal bins over `[lo, hi)`,
/// next to a reference density, as `x,density,reference` rows.
pub fn density_histogram_csv(samples: &[f64], lo: f64, hi: f64, bins: usize, reference: impl Fn(f64) -> f64) -> String {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let n = samples.len() as f64;
    let mut s = String::from("x,density,reference\n");
    for (i, c) in counts.iter().enumerate() {
        let x = lo + (i as f64 + 0.5) * width;
        let _ = writeln!(s, "{x:.6},{:.8},{:.8}", *c as f64 / (n * width), reference(x));
    }
    s
}

/// Writes the bits packed MSB-first with no header, the flat layout external
/// batteries read.
pub fn export_for_external_suite(bits: &[u8], path: &Path) -> Result<()> {
    let bytes: Vec<u8> = bits
        .chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect();
    fsio::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn proportion_bound_values() {
        assert!((proportion_bound(1000) - 0.980561).abs() < 1e-6);
        assert!((proportion_bound(100) - 0.960150).abs() < 1e-6);
    }

    #[test]
    fn all_zero_stream_fails_frequency() {
        let bits = vec![0u8; 100 * 1000];
        let r = run_battery(&bits, 100, 1000, &[TestId::Frequency]).unwrap();
        assert_eq!(r.outcomes[0].proportion(), Some(0.0));
        assert_eq!(r.outcomes[0].passed(), Some(false));
    }

    #[test]
    fn unimplemented_rows_are_reported() {
        let bits = vec![1u8; 2000];
        let r = run_battery(&bits, 1, 2000, &[TestId::Rank, TestId::Universal]).unwrap();
        assert!(r.outcomes.iter().all(|o| matches!(o, TestOutcome::Unimplemented(_))));
        assert!(r.render_table().contains("Unimplemented"));
        assert_eq!(TestId::implemented_tests().len(), 10);
    }

    #[test]
    fn insufficient_bits_rejected() {
        assert!(matches!(
            run_battery(&[0, 1, 0], 2, 2, &[TestId::Frequency]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn reference_prng_within_binomial_band() {
        // ChaCha output: pass proportions should sit near 0.99
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2024);
        let n_strings = 200;
        let len = 20_000;
        let bits: Vec<u8> = (0..n_strings * len).map(|_| rng.random::<bool>() as u8).collect();
        let r = run_battery(&bits, n_strings, len, &TestId::implemented_tests()).unwrap();
        let sd = (0.99 * 0.01 / n_strings as f64).sqrt();
        for o in &r.outcomes {
            let p = o.proportion().unwrap();
            assert!((p - 0.99).abs() <= 4.0 * sd + 1e-12, "{:?}: {p}", o.test());
            assert!(o.passed().unwrap());
        }
    }

    #[test]
    fn unpack_and_export() {
        assert_eq!(unpack_bits(&[0b1010_0001]), vec![1, 0, 1, 0, 0, 0, 0, 1]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        export_for_external_suite(&[1, 0, 1, 0, 0, 0, 0, 1, 1], &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), vec![0b1010_0001, 0b1000_0000]);
    }
}
