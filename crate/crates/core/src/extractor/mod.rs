//! Randomness extraction: leftover-hash sizing and Toeplitz hashing of
//! serialized ADC samples.

mod toeplitz;

pub use toeplitz::{toeplitz_hash, toeplitz_hash_reference, ToeplitzHasher};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::calibration::Decision;
use crate::detector::RawSampleBlock;
use crate::entropy::EntropyBound;
use crate::error::{Error, Result};
use crate::fsio;
use crate::rng::substream;
use crate::scalar::Scalar;

const MAX_BLOCK_SAMPLES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionPlan {
    pub bits_per_sample: u32,
    pub samples_per_block: usize,
    pub input_bits: usize,
    pub h_min_per_sample: f64,
    pub epsilon: f64,
    pub output_bits: usize,
    pub seed_bits: usize,
}

impl ExtractionPlan {
    /// `2·log2(1/ε)`, the leftover-hash penalty in bits.
    pub fn penalty_bits(&self) -> f64 {
        2.0 * (1.0 / self.epsilon).log2()
    }

    pub fn bits_per_sample_out(&self) -> f64 {
        self.output_bits as f64 / self.samples_per_block as f64
    }

    /// Headroom of `m + 2 log2(1/ε) ≤ N·h_min`; never negative for a valid plan.
    pub fn leftover_hash_slack(&self) -> f64 {
        self.samples_per_block as f64 * self.h_min_per_sample - self.penalty_bits() - self.output_bits as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.output_bits >= 1
            && self.input_bits == self.samples_per_block * self.bits_per_sample as usize
            && self.seed_bits == self.input_bits + self.output_bits - 1
            && self.leftover_hash_slack() >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::SecurityViolation(format!(
                "inconsistent extraction plan {self:?}"
            )))
        }
    }
}

/// Smallest block size whose leftover-hash output reaches the target rate.
pub fn plan_extraction(
    bits_per_sample: u32,
    h_min_per_sample: f64,
    epsilon: f64,
    target_bits_per_sample: f64,
) -> Result<ExtractionPlan> {
    if !(1..=16).contains(&bits_per_sample) {
        return Err(Error::invalid(format!(
            "bits_per_sample must be in [1, 16], got {bits_per_sample}"
        )));
    }
    if !(h_min_per_sample > 0.0 && h_min_per_sample <= bits_per_sample as f64) {
        return Err(Error::invalid(format!(
            "h_min_per_sample must be in (0, {bits_per_sample}], got {h_min_per_sample}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(format!("epsilon must be in (0, 1/2), got {epsilon}")));
    }
    if !(target_bits_per_sample > 0.0) {
        return Err(Error::invalid("target bits per sample must be positive"));
    }
    if target_bits_per_sample >= h_min_per_sample {
        return Err(Error::InfeasiblePlan(format!(
            "target {target_bits_per_sample} bits/sample is not below h_min {h_min_per_sample}"
        )));
    }
    let penalty = 2.0 * (1.0 / epsilon).log2();
    let start = ((penalty / (h_min_per_sample - target_bits_per_sample)).floor() as usize)
        .saturating_sub(2)
        .max(1);
    for n in start..=MAX_BLOCK_SAMPLES {
        let nf = n as f64;
        let m = (nf * h_min_per_sample - penalty).floor();
        // target·N can land a few ulps above an exactly representable m
        if m >= 1.0 && m >= target_bits_per_sample * nf - 1e-9 * nf {
            let input_bits = n * bits_per_sample as usize;
            let output_bits = m as usize;
            let plan = ExtractionPlan {
                bits_per_sample,
                samples_per_block: n,
                input_bits,
                h_min_per_sample,
                epsilon,
                output_bits,
                seed_bits: input_bits + output_bits - 1,
            };
            plan.validate()?;
            return Ok(plan);
        }
    }
    Err(Error::InfeasiblePlan(format!(
        "no block of at most {MAX_BLOCK_SAMPLES} samples reaches {target_bits_per_sample} bits/sample"
    )))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedProvenance {
    /// Read from a file, e.g. the output of an independent QRNG.
    External(PathBuf),
    /// Deterministic ChaCha20 output. Not a secret, for tests only.
    TestPrng { rng_seed: u64 },
}

impl SeedProvenance {
    pub fn is_secure(&self) -> bool {
        matches!(self, SeedProvenance::External(_))
    }

    pub fn describe(&self) -> String {
        match self {
            SeedProvenance::External(p) => format!("external file {}", p.display()),
            SeedProvenance::TestPrng { rng_seed } => format!("test PRNG (NOT SECURE) rng_seed={rng_seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed {
    /// One 0/1 value per seed bit.
    pub bits: Vec<u8>,
    pub provenance: SeedProvenance,
}

impl ToeplitzSeed {
    /// Raw binary, bits MSB-first, exactly `ceil(seed_bits/8)` bytes.
    pub fn from_file(path: &Path, plan: &ExtractionPlan) -> Result<Self> {
        let bytes = fsio::read(path)?;
        let want = plan.seed_bits.div_ceil(8);
        if bytes.len() != want {
            return Err(Error::format(
                path,
                format!(
                    "seed file has {} bytes, plan needs {want} ({} bits)",
                    bytes.len(),
                    plan.seed_bits
                ),
            ));
        }
        let mut bits = unpack_msb_first(&bytes);
        bits.truncate(plan.seed_bits);
        Ok(Self {
            bits,
            provenance: SeedProvenance::External(path.to_path_buf()),
        })
    }

    pub fn test_prng(plan: &ExtractionPlan, rng_seed: u64) -> Self {
        let mut rng = substream(rng_seed, "toeplitz-seed");
        Self {
            bits: (0..plan.seed_bits).map(|_| rng.random::<bool>() as u8).collect(),
            provenance: SeedProvenance::TestPrng { rng_seed },
        }
    }

    pub fn validate(&self, plan: &ExtractionPlan) -> Result<()> {
        if self.bits.len() != plan.seed_bits {
            return Err(Error::LengthMismatch {
                what: "Toeplitz seed bits",
                expected: plan.seed_bits,
                actual: self.bits.len(),
            });
        }
        Ok(())
    }
}

/// Two's-complement, most significant bit first, `bits` bits per sample.
pub fn serialize_samples(codes: &[i16], bits: u32, out: &mut Vec<u8>) {
    let mask = if bits >= 16 { u16::MAX } else { (1u16 << bits) - 1 };
    for &c in codes {
        let v = (c as u16) & mask;
        out.extend((0..bits).rev().map(|b| ((v >> b) & 1) as u8));
    }
}

pub fn pack_msb_first(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}

pub fn unpack_msb_first(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport {
    pub plan: ExtractionPlan,
    pub certified_h_min: f64,
    pub pulse_rate: f64,
    pub blocks_hashed: usize,
    pub raw_samples: usize,
    pub discarded_samples: usize,
    pub output_bits: usize,
    pub seed: String,
    pub seed_secure: bool,
}

impl ExtractionReport {
    pub fn raw_bits(&self) -> usize {
        self.blocks_hashed * self.plan.input_bits
    }

    pub fn effective_bits_per_sample(&self) -> f64 {
        if self.blocks_hashed == 0 {
            0.0
        } else {
            self.output_bits as f64 / (self.blocks_hashed * self.plan.samples_per_block) as f64
        }
    }

    /// Output rate at the configured pulse rate, bit/s.
    pub fn output_rate(&self) -> f64 {
        self.pulse_rate * self.plan.bits_per_sample_out()
    }

    pub fn to_text(&self) -> String {
        let p = &self.plan;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}: {v}");
        };
        kv("bits_per_sample", p.bits_per_sample.to_string());
        kv("samples_per_block", p.samples_per_block.to_string());
        kv("input_bits_per_block", p.input_bits.to_string());
        kv("output_bits_per_block", p.output_bits.to_string());
        kv("seed_bits", p.seed_bits.to_string());
        kv("h_min_per_sample", format!("{:.6}", p.h_min_per_sample));
        kv("certified_h_min", format!("{:.6}", self.certified_h_min));
        kv("epsilon_log2", format!("{:.3}", p.epsilon.log2()));
        kv("leftover_hash_penalty_bits", format!("{:.3}", p.penalty_bits()));
        kv(
            "leftover_hash_check",
            format!(
                "{} + {:.3} <= {:.3} (slack {:.3})",
                p.output_bits,
                p.penalty_bits(),
                p.samples_per_block as f64 * p.h_min_per_sample,
                p.leftover_hash_slack()
            ),
        );
        kv("blocks_hashed", self.blocks_hashed.to_string());
        kv("raw_samples", self.raw_samples.to_string());
        kv("discarded_samples", self.discarded_samples.to_string());
        kv("raw_bits", self.raw_bits().to_string());
        kv("output_bits", self.output_bits.to_string());
        kv("plan_bits_per_sample", format!("{:.6}", p.bits_per_sample_out()));
        kv(
            "effective_bits_per_sample",
            format!("{:.6}", self.effective_bits_per_sample()),
        );
        kv("pulse_rate_hz", format!("{:.0}", self.pulse_rate));
        kv("output_rate_bps", format!("{:.0}", self.output_rate()));
        kv("seed_provenance", self.seed.clone());
        kv("seed_secure", self.seed_secure.to_string());
        kv("seed_reused_across_blocks", "true".into());
        kv(
            "bit_order",
            "two's-complement samples, MSB first; output packed MSB first".into(),
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// One 0/1 value per output bit, in block order.
    pub bits: Vec<u8>,
    pub report: ExtractionReport,
}

/// Hashes consecutive `N`-sample groups of the concatenated blocks. A
/// trailing partial group is discarded and counted.
pub fn extract_stream<T: Scalar>(
    blocks: &[RawSampleBlock],
    plan: &ExtractionPlan,
    seed: &ToeplitzSeed,
    bound: &EntropyBound<T>,
    decision: Decision,
    pulse_rate: f64,
) -> Result<Extraction> {
    match decision {
        Decision::Keep => {}
        other => {
            return Err(Error::StaleCalibration(format!(
                "scheduler says {other:?}; refusing to extract"
            )))
        }
    }
    plan.validate()?;
    seed.validate(plan)?;
    let certified = bound.h_min_bits.to_f64_lossy();
    if plan.h_min_per_sample > certified + 1e-12 {
        return Err(Error::SecurityViolation(format!(
            "plan assumes {} bits/sample but calibration certifies {certified}",
            plan.h_min_per_sample
        )));
    }
    for b in blocks {
        if b.bits != plan.bits_per_sample {
            return Err(Error::invalid(format!(
                "block has {}-bit samples, plan expects {}",
                b.bits, plan.bits_per_sample
            )));
        }
    }
    let codes: Vec<i16> = blocks.iter().flat_map(|b| b.codes.iter().copied()).collect();
    let hasher = ToeplitzHasher::new(&seed.bits, plan.input_bits, plan.output_bits)?;
    let n = plan.samples_per_block;
    let groups: Vec<&[i16]> = codes.chunks_exact(n).collect();
    let hashed = groups
        .par_iter()
        .map(|g| {
            let mut input = Vec::with_capacity(plan.input_bits);
            serialize_samples(g, plan.bits_per_sample, &mut input);
            hasher.hash(&input)
        })
        .collect::<Result<Vec<_>>>()?;
    let bits: Vec<u8> = hashed.into_iter().flatten().collect();
    let report = ExtractionReport {
        plan: *plan,
        certified_h_min: certified,
        pulse_rate,
        blocks_hashed: groups.len(),
        raw_samples: codes.len(),
        discarded_samples: codes.len() % n,
        output_bits: bits.len(),
        seed: seed.provenance.describe(),
        seed_secure: seed.provenance.is_secure(),
    };
    Ok(Extraction { bits, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::vacuum_min_entropy;

    #[test]
    fn operating_point_plan() {
        let p = plan_extraction(8, 5.53, 2f64.powi(-100), 5.4).unwrap();
        assert_eq!((p.samples_per_block, p.output_bits, p.input_bits), (1540, 8316, 12320));
        assert_eq!(p.seed_bits, 12320 + 8316 - 1);
        // one sample fewer misses the target
        assert!(((1539.0 * 5.53 - 200.0f64).floor()) < 5.4 * 1539.0);
        assert!(p.bits_per_sample_out() >= 5.4);
        let q = plan_extraction(8, 8.0, 2f64.powi(-100), 7.9).unwrap();
        assert_eq!((q.samples_per_block, q.output_bits), (2000, 15800));
    }

    #[test]
    fn infeasible_and_invalid_plans() {
        assert!(matches!(
            plan_extraction(8, 5.53, 1e-30, 5.53),
            Err(Error::InfeasiblePlan(_))
        ));
        assert!(matches!(
            plan_extraction(8, 5.53, 1e-30, 6.0),
            Err(Error::InfeasiblePlan(_))
        ));
        assert!(plan_extraction(8, 5.53, 0.7, 5.0).is_err());
        assert!(plan_extraction(8, 9.0, 1e-30, 5.0).is_err());
    }

    #[test]
    fn serialization_order() {
        let mut out = Vec::new();
        serialize_samples(&[-1, 5, -128, 127], 8, &mut out);
        let s: String = out.iter().map(|b| (b'0' + b) as char).collect();
        assert_eq!(s, "11111111000001011000000001111111");
        assert_eq!(pack_msb_first(&out), vec![0xff, 0x05, 0x80, 0x7f]);
        assert_eq!(unpack_msb_first(&[0xff, 0x05, 0x80, 0x7f]), out);
    }

    fn block(codes: Vec<i16>) -> RawSampleBlock {
        RawSampleBlock {
            codes,
            bits: 8,
            config_hash: "test".into(),
            run_id: String::new(),
            clipped: 0,
        }
    }

    fn setup() -> (ExtractionPlan, ToeplitzSeed, EntropyBound<f64>, Vec<RawSampleBlock>) {
        let plan = plan_extraction(8, 5.53, 2f64.powi(-100), 5.4).unwrap();
        let seed = ToeplitzSeed::test_prng(&plan, 5);
        let bound = vacuum_min_entropy(0.038).unwrap();
        let mut rng = substream(1, "extract-test");
        let codes: Vec<i16> = (0..3 * 1540 + 100).map(|_| rng.random_range(-128..128)).collect();
        (
            plan,
            seed,
            bound,
            vec![block(codes[..2000].to_vec()), block(codes[2000..].to_vec())],
        )
    }

    #[test]
    fn stream_accounting_and_determinism() {
        let (plan, seed, bound, blocks) = setup();
        let a = extract_stream(&blocks, &plan, &seed, &bound, Decision::Keep, 50e6).unwrap();
        let b = extract_stream(&blocks, &plan, &seed, &bound, Decision::Keep, 50e6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.blocks_hashed, 3);
        assert_eq!(a.report.discarded_samples, 100);
        assert_eq!(a.bits.len(), 3 * 8316);
        assert!((a.report.effective_bits_per_sample() - 5.4).abs() < 1e-12);
        assert!(a.report.output_rate() >= 270e6);
        let text = a.report.to_text();
        assert!(text.contains("output_rate_bps: 270000000"));
        assert!(text.contains("seed_secure: false"));
        // block boundaries in the input do not matter
        let joined = block(blocks.iter().flat_map(|b| b.codes.clone()).collect());
        assert_eq!(
            extract_stream(&[joined], &plan, &seed, &bound, Decision::Keep, 50e6)
                .unwrap()
                .bits,
            a.bits
        );
    }

    #[test]
    fn refuses_stale_or_overclaimed() {
        let (plan, seed, bound, blocks) = setup();
        for d in [Decision::Alarm, Decision::Recalibrate] {
            assert!(matches!(
                extract_stream(&blocks, &plan, &seed, &bound, d, 50e6),
                Err(Error::StaleCalibration(_))
            ));
        }
        let weak = vacuum_min_entropy(0.05).unwrap();
        assert!(matches!(
            extract_stream(&blocks, &plan, &seed, &weak, Decision::Keep, 50e6),
            Err(Error::SecurityViolation(_))
        ));
    }

    #[test]
    fn seed_file_roundtrip() {
        let plan = plan_extraction(8, 5.53, 2f64.powi(-100), 5.4).unwrap();
        let seed = ToeplitzSeed::test_prng(&plan, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seed.bin");
        fsio::write_atomic(&path, &pack_msb_first(&seed.bits)).unwrap();
        let back = ToeplitzSeed::from_file(&path, &plan).unwrap();
        assert_eq!(back.bits, seed.bits);
        assert!(back.provenance.is_secure());
        fsio::write_atomic(&path, &[0u8; 10]).unwrap();
        assert!(ToeplitzSeed::from_file(&path, &plan).is_err());
    }
}
