//! Run configuration: a line-oriented, sectioned `key = value` format.
//!
//! ```text
//! # comment
//! [detector]
//! conversion_gain = 360
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique per
//! section, unknown sections or keys are errors, and every key has a
//! default. The full key list is in the README.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::calibration::{parse_timestamp, CalibrationSettings, RecalibrationPolicy};
use crate::detector::{ExcessNoiseMode, LoPhasePolicy, MeasurementConfig};
use crate::dsp::FilterChainConfig;
use crate::error::{Error, Result};
use crate::fsio;
use crate::states::QuantumStateModel;
use crate::stats::TestId;

type Table = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub fn parse_sections(text: &str) -> Result<Table> {
    let mut table = Table::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(format!("line {line_no}: unterminated section header")))?
                .trim();
            if name.is_empty() {
                return Err(cfg_err(format!("line {line_no}: empty section name")));
            }
            table.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {line_no}: expected key = value")))?;
        let section = current
            .as_ref()
            .ok_or_else(|| cfg_err(format!("line {line_no}: key outside any section")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(cfg_err(format!("line {line_no}: empty key")));
        }
        let entries = table.get_mut(section).expect("section inserted");
        if entries
            .insert(key.to_string(), (v.trim().to_string(), line_no))
            .is_some()
        {
            return Err(cfg_err(format!("line {line_no}: duplicate key {section}.{key}")));
        }
    }
    Ok(table)
}

/// Pulls typed values out of a parsed table, then complains about leftovers.
struct Reader {
    table: Table,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.table.get_mut(section).and_then(|s| s.remove(key))
    }

    fn parse<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
        match self.take(section, key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse()
                .map_err(|_| cfg_err(format!("line {line}: {section}.{key} = {v:?} is not valid"))),
        }
    }

    fn with<T>(&mut self, section: &str, key: &str, default: T, f: impl FnOnce(&str) -> Option<T>) -> Result<T> {
        match self.take(section, key) {
            None => Ok(default),
            Some((v, line)) => {
                f(&v).ok_or_else(|| cfg_err(format!("line {line}: {section}.{key} = {v:?} is not valid")))
            }
        }
    }

    fn finish(self) -> Result<()> {
        for (section, entries) in &self.table {
            if !KNOWN_SECTIONS.contains(&section.as_str()) {
                return Err(cfg_err(format!("unknown section [{section}]")));
            }
            if let Some((key, (_, line))) = entries.iter().next() {
                return Err(cfg_err(format!("line {line}: unknown key {section}.{key}")));
            }
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: [&str; 9] = [
    "run",
    "states",
    "detector",
    "dsp",
    "calibration",
    "entropy",
    "extractor",
    "stats",
    "attacklab",
];

fn parse_f64_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

fn parse_state(s: &str) -> Option<QuantumStateModel<f64>> {
    let (kind, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b.trim())));
    match (kind.trim(), arg) {
        ("vacuum", None) => Some(QuantumStateModel::Vacuum),
        ("fock", Some(n)) => n.parse().ok().map(QuantumStateModel::Fock),
        ("thermal", Some(n)) => n.parse().ok().map(|m| QuantumStateModel::Thermal { mean_photons: m }),
        ("squeezed", Some(r)) => r.parse().ok().map(|r| QuantumStateModel::squeezed_vacuum(r, 0.0)),
        _ => None,
    }
}

fn parse_phase(s: &str) -> Option<LoPhasePolicy<f64>> {
    let (kind, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b.trim())));
    match (kind.trim(), arg) {
        ("uniform", None) => Some(LoPhasePolicy::UniformRandom),
        ("fixed", Some(t)) => t.parse().ok().map(LoPhasePolicy::Fixed),
        ("wrapped", Some(cw)) => {
            let v = parse_f64_list(cw)?;
            (v.len() == 2).then(|| LoPhasePolicy::WrappedGaussian {
                center: v[0],
                width: v[1],
            })
        }
        _ => None,
    }
}

fn parse_tests(s: &str) -> Option<Vec<TestId>> {
    if s.trim() == "all" {
        return Some(TestId::ALL.to_vec());
    }
    s.split(',')
        .map(|name| {
            let n = name.trim().to_ascii_lowercase();
            TestId::ALL.into_iter().find(|t| t.key() == n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    /// Unix seconds; all timestamps come from here, never the wall clock.
    pub time: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSection {
    pub measurement: MeasurementConfig<f64>,
    pub samples_per_block: usize,
    pub n_blocks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DspSection {
    pub enabled: bool,
    pub chain: FilterChainConfig<f64>,
    pub autocorrelation_max_lag: usize,
    pub autocorrelation_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSection {
    pub powers: Vec<f64>,
    pub samples_per_point: usize,
    pub min_points: usize,
    pub conservatism_sigmas: f64,
    pub operating_power: Option<f64>,
    pub policy: RecalibrationPolicy,
    pub log_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorSection {
    pub epsilon_log2: f64,
    pub target_bits_per_sample: f64,
    pub seed_file: Option<PathBuf>,
    /// Permit the deterministic, non-secret seed when no file is given.
    pub allow_test_seed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsSection {
    pub n_strings: usize,
    pub string_length: usize,
    pub tests: Vec<TestId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSection {
    pub r: f64,
    pub delta: f64,
    pub n_rounds: usize,
    pub fixed_theta: f64,
    pub verify_states: usize,
    pub verify_max_dim: usize,
    pub fock_scan_max: usize,
    pub scan_deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run: RunSection,
    pub input_state: QuantumStateModel<f64>,
    pub detector: DetectorSection,
    pub dsp: DspSection,
    pub calibration: CalibrationSection,
    pub extractor: ExtractorSection,
    pub stats: StatsSection,
    pub attack: AttackSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_table(Table::new()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_table(parse_sections(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsio::read_to_string(path).map_err(|e| cfg_err(e.to_string()))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths in a config file are relative to that file
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(seed) = &cfg.extractor.seed_file {
            if seed.is_relative() {
                cfg.extractor.seed_file = Some(base.join(seed));
            }
        }
        if cfg.run.output_dir.is_relative() {
            cfg.run.output_dir = base.join(&cfg.run.output_dir);
        }
        Ok(cfg)
    }

    fn from_table(table: Table) -> Result<Self> {
        let mut r = Reader { table };
        let run = RunSection {
            rng_seed: r.parse("run", "rng_seed", 20_190_101)?,
            output_dir: r.parse("run", "output_dir", PathBuf::from("sdiqrng-out"))?,
            time: r.with("run", "time", 1_546_300_800, |s| parse_timestamp(s).ok())?,
        };
        let input_state = r.with("states", "input", QuantumStateModel::Vacuum, parse_state)?;
        let pulse_rate: f64 = r.parse("detector", "pulse_rate", 50e6)?;
        let measurement = MeasurementConfig {
            lo_phase_policy: r.with("detector", "lo_phase", LoPhasePolicy::UniformRandom, parse_phase)?,
            lo_power: r.parse("detector", "lo_power", 1.0)?,
            pulse_rate,
            adc_bits: r.parse("detector", "adc_bits", 8)?,
            adc_full_scale: r.parse("detector", "adc_full_scale", 256.0)?,
            electronic_noise_var: r.parse("detector", "electronic_noise_var", 3.0)?,
            excess_noise_var: r.parse("detector", "excess_noise_var", 0.0)?,
            excess_noise_mode: r.with(
                "detector",
                "excess_noise_mode",
                ExcessNoiseMode::Constant,
                |s| match s {
                    "constant" => Some(ExcessNoiseMode::Constant),
                    "power" => Some(ExcessNoiseMode::PowerProportional),
                    _ => None,
                },
            )?,
            conversion_gain: r.parse("detector", "conversion_gain", 360.0)?,
        };
        let detector = DetectorSection {
            measurement,
            samples_per_block: r.parse("detector", "samples_per_block", 1_000_000)?,
            n_blocks: r.parse("detector", "n_blocks", 3)?,
        };
        let chain_default = FilterChainConfig::<f64>::default();
        let dsp = DspSection {
            enabled: r.parse("dsp", "enabled", true)?,
            chain: FilterChainConfig {
                input_rate: r.parse("dsp", "input_rate", chain_default.input_rate)?,
                lowpass_cutoff: r.parse("dsp", "lowpass_cutoff", chain_default.lowpass_cutoff)?,
                pulse_rate,
                sample_phase: r.parse("dsp", "sample_phase", chain_default.sample_phase)?,
                modulation_freq: r.parse("dsp", "modulation_freq", pulse_rate / 2.0)?,
                post_mod_lowpass_cutoff: r.parse("dsp", "post_mod_lowpass_cutoff", 0.4999 * pulse_rate)?,
                fir_taps: r.parse("dsp", "fir_taps", chain_default.fir_taps)?,
            },
            autocorrelation_max_lag: r.parse("dsp", "autocorrelation_max_lag", 400)?,
            autocorrelation_samples: r.parse("dsp", "autocorrelation_samples", 1_000_000)?,
        };
        let calibration = CalibrationSection {
            powers: r.with("calibration", "powers", vec![0.2, 0.4, 0.6, 0.8, 1.0], parse_f64_list)?,
            samples_per_point: r.parse("calibration", "samples_per_point", 1_000_000)?,
            min_points: r.parse("calibration", "min_points", 5)?,
            conservatism_sigmas: r.parse("calibration", "conservatism_sigmas", 2.0)?,
            operating_power: r.with("calibration", "operating_power", None, |s| s.parse().ok().map(Some))?,
            policy: RecalibrationPolicy {
                interval_s: r.parse("calibration", "interval_s", 600.0)?,
                drift_threshold: r.parse("calibration", "drift_threshold", 0.02)?,
            },
            log_file: r.parse("calibration", "log", PathBuf::from("calibration.log"))?,
        };
        let extractor = ExtractorSection {
            epsilon_log2: r.parse("entropy", "epsilon_log2", -100.0)?,
            target_bits_per_sample: r.parse("extractor", "target_bits_per_sample", 5.4)?,
            seed_file: r.with("extractor", "seed_file", None, |s| Some(Some(PathBuf::from(s))))?,
            allow_test_seed: r.parse("extractor", "allow_test_seed", false)?,
        };
        let stats = StatsSection {
            n_strings: r.parse("stats", "n_strings", 100)?,
            string_length: r.parse("stats", "string_length", 100_000)?,
            tests: r.with("stats", "tests", TestId::ALL.to_vec(), parse_tests)?,
        };
        let attack = AttackSection {
            r: r.parse("attacklab", "r", 1.5)?,
            delta: r.parse("attacklab", "delta", 0.1)?,
            n_rounds: r.parse("attacklab", "n_rounds", 1_000_000)?,
            fixed_theta: r.parse("attacklab", "fixed_theta", 0.0)?,
            verify_states: r.parse("attacklab", "verify_states", 100)?,
            verify_max_dim: r.parse("attacklab", "verify_max_dim", 8)?,
            fock_scan_max: r.parse("attacklab", "fock_scan_max", 20)?,
            scan_deltas: r.with(
                "attacklab",
                "scan_deltas",
                vec![0.01, 0.05, 0.1, 0.5, 1.0],
                parse_f64_list,
            )?,
        };
        r.finish()?;
        let cfg = Self {
            run,
            input_state,
            detector,
            dsp,
            calibration,
            extractor,
            stats,
            attack,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-section consistency, checked before any command runs.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| cfg_err(e.to_string());
        let m = &self.detector.measurement;
        m.validate().map_err(wrap)?;
        self.input_state.validate().map_err(wrap)?;
        if self.detector.samples_per_block == 0 || self.detector.n_blocks == 0 {
            return Err(cfg_err("detector.samples_per_block and n_blocks must be positive"));
        }
        if self.dsp.enabled {
            self.dsp.chain.validate().map_err(wrap)?;
            if self.detector.samples_per_block <= self.dsp.chain.fir_taps {
                return Err(cfg_err("detector.samples_per_block must exceed dsp.fir_taps"));
            }
            if self.calibration.samples_per_point <= self.dsp.chain.fir_taps {
                return Err(cfg_err("calibration.samples_per_point must exceed dsp.fir_taps"));
            }
        }
        let c = &self.calibration;
        if c.powers.iter().any(|p| !(*p > 0.0)) {
            return Err(cfg_err("calibration.powers must be positive"));
        }
        let p_op = self.operating_power();
        if (m.lo_power - p_op).abs() > 1e-12 * p_op {
            return Err(cfg_err(format!(
                "detector.lo_power {} differs from the calibration operating power {p_op}; delta would not apply",
                m.lo_power
            )));
        }
        if !(c.conservatism_sigmas >= 0.0) || c.min_points < 3 {
            return Err(cfg_err(
                "calibration.conservatism_sigmas must be >= 0 and min_points >= 3",
            ));
        }
        if !(c.policy.interval_s > 0.0 && c.policy.drift_threshold > 0.0) {
            return Err(cfg_err("calibration interval and drift threshold must be positive"));
        }
        let e = &self.extractor;
        if !(e.epsilon_log2 < -1.0) || !e.epsilon_log2.is_finite() {
            return Err(cfg_err("entropy.epsilon_log2 must be below -1"));
        }
        if !(e.target_bits_per_sample > 0.0) {
            return Err(cfg_err("extractor.target_bits_per_sample must be positive"));
        }
        if self.stats.n_strings == 0 || self.stats.string_length == 0 {
            return Err(cfg_err("stats.n_strings and string_length must be positive"));
        }
        let a = &self.attack;
        if !(a.r >= 0.0 && a.delta > 0.0) || a.verify_max_dim == 0 || a.scan_deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(cfg_err("attacklab parameters out of range"));
        }
        Ok(())
    }

    pub fn operating_power(&self) -> f64 {
        self.calibration
            .operating_power
            .unwrap_or_else(|| self.calibration.powers.iter().copied().fold(f64::MIN, f64::max))
    }

    pub fn calibration_settings(&self) -> CalibrationSettings<f64> {
        CalibrationSettings {
            min_points: self.calibration.min_points,
            conservatism_sigmas: self.calibration.conservatism_sigmas,
            operating_power: self.calibration.operating_power,
            ..CalibrationSettings::new(self.detector.measurement.adc_step())
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.extractor.epsilon_log2.exp2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_operating_point() {
        let c = RunConfig::default();
        assert_eq!(c.detector.measurement.adc_bits, 8);
        assert_eq!(c.detector.measurement.adc_step(), 1.0);
        assert_eq!(c.epsilon(), 2f64.powi(-100));
        assert_eq!(c.extractor.target_bits_per_sample, 5.4);
        assert_eq!(c.operating_power(), 1.0);
        assert_eq!(c.stats.tests.len(), 17);
    }

    #[test]
    fn parses_sections_and_overrides() {
        let text = "\n# demo\n[run]\nrng_seed = 7\ntime = 2026-03-01T12:00:00Z\n\n[detector]\nconversion_gain = 50\nlo_phase = fixed:0.5\n[states]\ninput = fock:3\n[stats]\ntests = frequency, runs\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.run.rng_seed, 7);
        assert_eq!(c.run.time, 1_772_366_400);
        assert_eq!(c.detector.measurement.conversion_gain, 50.0);
        assert_eq!(c.detector.measurement.lo_phase_policy, LoPhasePolicy::Fixed(0.5));
        assert_eq!(c.input_state, QuantumStateModel::Fock(3));
        assert_eq!(c.stats.tests, vec![TestId::Frequency, TestId::Runs]);
    }

    #[test]
    fn rejects_malformed_configs() {
        for bad in [
            "[run]\nrng_seed = x\n",
            "rng_seed = 1\n",
            "[run]\nrng_seed = 1\nrng_seed = 2\n",
            "[nope]\n",
            "[run]\ncolour = blue\n",
            "[run\n",
            "[run]\njust text\n",
            "[detector]\nlo_power = 0.5\n",
            "[dsp]\nmodulation_freq = 30e6\n",
            "[dsp]\nfir_taps = 100\n",
            "[entropy]\nepsilon_log2 = 0\n",
            "[states]\ninput = cat:2\n",
        ] {
            let e = RunConfig::parse(bad).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad:?} -> {e:?}");
            assert_eq!(e.exit_code(), 2);
        }
    }

    #[test]
    fn shipped_config_lists_the_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf");
        let c = RunConfig::load(&path).unwrap();
        let mut want = RunConfig::default();
        want.extractor.allow_test_seed = true;
        want.run.output_dir = path.parent().unwrap().join("sdiqrng-out");
        assert_eq!(c, want);
    }
}
