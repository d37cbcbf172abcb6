//! The subcommands: each reads a validated [`RunConfig`], writes its
//! artifacts atomically under the output directory and returns a summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::attacklab::{
    eve_reduced_path_i, eve_reduced_path_ii, min_eigenvalue, phase_average_A, random_pure_state, run_attack,
    trace_distance, two_mode_squeezed, AttackReport, AttackScenario, LoMode, TmsvForm,
};
use crate::calibration::{
    append_log, fit_calibration, read_log, recalibration_scheduler, CalibrationPoint, CalibrationRecord, Decision,
};
use crate::config::RunConfig;
use crate::detector::{measure_block, read_block_binary, write_block_binary, RawSampleBlock};
use crate::dsp::{autocorrelation, filter_pulses, AutocorrelationReport};
use crate::entropy::{sdi_bound_check, vacuum_min_entropy};
use crate::error::{Error, Result};
use crate::extractor::{
    extract_stream, pack_msb_first, plan_extraction, toeplitz_hash, toeplitz_hash_reference, ExtractionReport,
    ToeplitzSeed,
};
use crate::fsio;
use crate::rng::{indexed_substream, substream};
use crate::states::QuantumStateModel;
use crate::stats::{density_histogram_csv, run_battery, unpack_bits, BatteryReport};

pub const RAW_DIR: &str = "raw";
pub const OUTPUT_BITS: &str = "output.bin";

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.run.output_dir.join(name)
}

fn vacuum_pdf(x: f64) -> f64 {
    (-x * x).exp() / std::f64::consts::PI.sqrt()
}

/// Filtered samples in raw units, transients dropped.
fn filtered_values(cfg: &RunConfig, block: &RawSampleBlock) -> Result<Vec<f64>> {
    let x = block.dequantized(cfg.detector.measurement.adc_step());
    if !cfg.dsp.enabled {
        return Ok(x);
    }
    Ok(filter_pulses(&x, &cfg.dsp.chain)?.settled().to_vec())
}

pub fn raw_block_paths(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = out_path(cfg, RAW_DIR);
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    Ok(paths)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let m = &cfg.detector.measurement;
    let dir = out_path(cfg, RAW_DIR);
    let mut clipped = 0u64;
    for i in 0..cfg.detector.n_blocks {
        let mut rng = indexed_substream(cfg.run.rng_seed, "detector", i as u64);
        let block = measure_block(&cfg.input_state, m, cfg.detector.samples_per_block, &mut rng)?
            .with_run_id(format!("seed{}-block{i}", cfg.run.rng_seed));
        clipped += block.clipped;
        write_block_binary(&block, &dir.join(format!("block_{i:04}.bin")))?;
    }
    let total = cfg.detector.n_blocks * cfg.detector.samples_per_block;
    let mut s = String::new();
    let _ = writeln!(s, "input_state: {:?}", cfg.input_state);
    let _ = writeln!(s, "config_hash: {}", m.config_hash());
    let _ = writeln!(s, "blocks: {}", cfg.detector.n_blocks);
    let _ = writeln!(s, "samples: {total}");
    let _ = writeln!(s, "clipped_fraction: {:.3e}", clipped as f64 / total as f64);
    fsio::write_atomic_str(&out_path(cfg, "simulate_report.txt"), &s)?;
    Ok(s)
}

/// Vacuum sweep over the configured powers with the signal port blocked.
pub fn calibration_points(cfg: &RunConfig) -> Result<Vec<CalibrationPoint<f64>>> {
    cfg.calibration
        .powers
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut m = cfg.detector.measurement.clone();
            m.lo_power = p;
            let mut rng = indexed_substream(cfg.run.rng_seed, "calibration", i as u64);
            let block = measure_block(
                &QuantumStateModel::Vacuum,
                &m,
                cfg.calibration.samples_per_point,
                &mut rng,
            )?;
            CalibrationPoint::from_samples(p, &filtered_values(cfg, &block)?)
        })
        .collect()
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationRecord<f64>> {
    let points = calibration_points(cfg)?;
    let result = fit_calibration(&points, &cfg.calibration_settings())?;
    let record = CalibrationRecord {
        timestamp: cfg.run.time,
        result,
    };
    append_log(&out_path(cfg, &cfg.calibration.log_file.to_string_lossy()), &record)?;

    let mut csv = String::from("# Fig. 4a: calibration line, filtered variance against LO power\npower,variance,fit\n");
    for p in &points {
        let _ = writeln!(
            csv,
            "{:.6},{:.6},{:.6}",
            p.power,
            p.variance,
            result.intercept + result.gradient * p.power
        );
    }
    fsio::write_atomic_str(&out_path(cfg, "fig4a_calibration.csv"), &csv)?;

    let bound = result.entropy_bound();
    let mut s = String::new();
    let _ = writeln!(s, "gradient: {:.6}", result.gradient);
    let _ = writeln!(s, "gradient_stderr: {:.6}", result.gradient_stderr);
    let _ = writeln!(s, "intercept: {:.6}", result.intercept);
    let _ = writeln!(s, "intercept_stderr: {:.6}", result.intercept_stderr);
    let _ = writeln!(s, "r_squared: {:.9}", result.r_squared);
    let _ = writeln!(s, "operating_power: {}", result.operating_power);
    let _ = writeln!(s, "delta: {:.9}", result.delta);
    let _ = writeln!(s, "delta_conservative: {:.9}", result.delta_conservative);
    let _ = writeln!(s, "h_min_nominal: {:.6}", result.nominal_bound().h_min_bits);
    let _ = writeln!(s, "h_min_certified: {:.6}", bound.h_min_bits);
    let _ = writeln!(s, "p_guess_bound: {:.6e}", bound.p_guess_bound);
    let _ = writeln!(s, "intercept_warning: {}", result.intercept_warning);
    fsio::write_atomic_str(&out_path(cfg, "calibration_report.txt"), &s)?;
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct ExtractSummary {
    pub report: ExtractionReport,
    pub autocorrelation: AutocorrelationReport<f64>,
    pub decision: Decision,
}

pub fn cmd_extract(cfg: &RunConfig, seed_file: Option<&Path>) -> Result<ExtractSummary> {
    let m = &cfg.detector.measurement;
    let history: Vec<CalibrationRecord<f64>> = read_log(&out_path(cfg, &cfg.calibration.log_file.to_string_lossy()))?;
    let Some(last) = history.last() else {
        return Err(Error::StaleCalibration(
            "no calibration on record; run calibrate first".into(),
        ));
    };
    let cal = last.result;
    if (cal.adc_step - m.adc_step()).abs() > 1e-12 * m.adc_step()
        || (cal.operating_power - m.lo_power).abs() > 1e-12 * m.lo_power
    {
        return Err(Error::StaleCalibration(
            "latest calibration was taken with a different ADC step or operating power".into(),
        ));
    }
    let decision = recalibration_scheduler(&history, &cfg.calibration.policy, cfg.run.time);
    let bound = cal.entropy_bound();
    let plan = plan_extraction(
        m.adc_bits,
        bound.h_min_bits,
        cfg.epsilon(),
        cfg.extractor.target_bits_per_sample,
    )?;
    let seed = match seed_file.or(cfg.extractor.seed_file.as_deref()) {
        Some(path) => ToeplitzSeed::from_file(path, &plan)?,
        None if cfg.extractor.allow_test_seed => ToeplitzSeed::test_prng(&plan, cfg.run.rng_seed),
        None => {
            return Err(Error::Config(
                "no Toeplitz seed: pass --seed-file or set extractor.allow_test_seed = true".into(),
            ))
        }
    };

    let paths = raw_block_paths(cfg)?;
    if paths.is_empty() {
        return Err(Error::InsufficientData(
            "no raw blocks found; run simulate first".into(),
        ));
    }
    let mut filtered_all = Vec::new();
    let mut blocks = Vec::with_capacity(paths.len());
    for p in &paths {
        let raw = read_block_binary(p)?;
        let vals = filtered_values(cfg, &raw)?;
        let mut clipped = 0u64;
        let codes = vals
            .iter()
            .map(|&v| {
                let (c, clip) = m.quantize(v);
                clipped += clip as u64;
                c as i16
            })
            .collect();
        blocks.push(RawSampleBlock {
            codes,
            bits: raw.bits,
            config_hash: raw.config_hash.clone(),
            run_id: raw.run_id.clone(),
            clipped,
        });
        filtered_all.extend(vals);
    }

    let n_ac = cfg.dsp.autocorrelation_samples.min(filtered_all.len());
    let ac = autocorrelation(&filtered_all[..n_ac], cfg.dsp.autocorrelation_max_lag)?;
    fsio::write_atomic_str(
        &out_path(cfg, "fig3b_autocorrelation.csv"),
        &format!(
            "# Fig. 3b: autocorrelation of filtered data, 95% white-noise CI\n{}",
            ac.to_csv()
        ),
    )?;
    let scale = (2.0 * cal.gradient * cal.operating_power).sqrt();
    let mean = filtered_all.iter().sum::<f64>() / filtered_all.len() as f64;
    let vac: Vec<f64> = filtered_all.iter().map(|v| (v - mean) / scale).collect();
    fsio::write_atomic_str(
        &out_path(cfg, "fig4b_pdf.csv"),
        &format!(
            "# Fig. 4b: PDF of filtered data in vacuum units against the vacuum PDF\n{}",
            density_histogram_csv(&vac, -4.0, 4.0, 80, vacuum_pdf)
        ),
    )?;

    let extraction = extract_stream(&blocks, &plan, &seed, &bound, decision, m.pulse_rate)?;
    fsio::write_atomic(&out_path(cfg, OUTPUT_BITS), &pack_msb_first(&extraction.bits))?;
    let mut text = extraction.report.to_text();
    let _ = writeln!(text, "scheduler_decision: {decision:?}");
    let _ = writeln!(
        text,
        "calibration_time: {}",
        crate::calibration::format_timestamp(last.timestamp)?
    );
    let _ = writeln!(text, "autocorrelation_samples: {}", ac.n_samples);
    let _ = writeln!(
        text,
        "autocorrelation_fraction_outside_ci: {:.4}",
        ac.fraction_outside_ci
    );
    fsio::write_atomic_str(&out_path(cfg, "extraction_report.txt"), &text)?;
    Ok(ExtractSummary {
        report: extraction.report,
        autocorrelation: ac,
        decision,
    })
}

/// Runs the battery; the report is written before a failure is returned.
pub fn cmd_test(cfg: &RunConfig, input: Option<&Path>) -> Result<BatteryReport> {
    let path = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, OUTPUT_BITS));
    let bits = unpack_bits(&fsio::read(&path)?);
    let report = run_battery(&bits, cfg.stats.n_strings, cfg.stats.string_length, &cfg.stats.tests)?;
    fsio::write_atomic_str(&out_path(cfg, "battery.txt"), &report.render_table())?;
    fsio::write_atomic_str(&out_path(cfg, "battery.csv"), &report.render_csv())?;
    if !report.all_implemented_passed() {
        return Err(Error::Verification(format!(
            "battery failures:\n{}",
            report.render_table()
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct AttackSummary {
    pub fixed: AttackReport,
    pub random: AttackReport,
    pub random_displacement_free: AttackReport,
}

pub fn cmd_attack(cfg: &RunConfig) -> Result<AttackSummary> {
    let a = &cfg.attack;
    let fixed = run_attack(
        &AttackScenario::vacuum_matched(a.r, LoMode::Fixed(a.fixed_theta), a.delta, a.n_rounds),
        &mut substream(cfg.run.rng_seed, "attack-fixed"),
    )?;
    let random = run_attack(
        &AttackScenario::vacuum_matched(a.r, LoMode::UniformRandom, a.delta, a.n_rounds),
        &mut substream(cfg.run.rng_seed, "attack-random"),
    )?;
    let random_displacement_free = run_attack(
        &AttackScenario::displacement_free(a.r, LoMode::UniformRandom, a.delta, a.n_rounds),
        &mut substream(cfg.run.rng_seed, "attack-random-free"),
    )?;
    let mut s = String::new();
    for (title, r) in [
        ("fixed LO, vacuum-matched displacement", &fixed),
        ("random LO, vacuum-matched displacement", &random),
        (
            "random LO, displacement-free squeezed vacuum",
            &random_displacement_free,
        ),
    ] {
        let _ = writeln!(s, "[{title}]\n{}", r.to_text());
    }
    fsio::write_atomic_str(&out_path(cfg, "attack_report.txt"), &s)?;
    for (name, r) in [
        ("attack_fixed_histogram.csv", &fixed),
        ("attack_random_histogram.csv", &random),
    ] {
        fsio::write_atomic_str(
            &out_path(cfg, name),
            &format!(
                "# Alice's outcome PDF under the squeezed-state attack against the vacuum PDF\n{}",
                density_histogram_csv(&r.outcomes, -6.0, 6.0, 120, vacuum_pdf)
            ),
        )?;
    }
    Ok(AttackSummary {
        fixed,
        random,
        random_displacement_free,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn fock_scan(cfg: &RunConfig) -> Check {
    let states: Vec<QuantumStateModel<f64>> = (1..=cfg.attack.fock_scan_max).map(QuantumStateModel::Fock).collect();
    let mut worst = f64::INFINITY;
    for &d in &cfg.attack.scan_deltas {
        match sdi_bound_check(&states, d) {
            Ok(r) => worst = worst.min(r.min_margin()),
            Err(e) => return check("fock-scan", false, e.to_string()),
        }
    }
    check(
        "fock-scan",
        worst > 0.0,
        format!(
            "Fock 1..{} at deltas {:?}: min margin {worst:.3e}",
            cfg.attack.fock_scan_max, cfg.attack.scan_deltas
        ),
    )
}

fn phase_randomization_equivalence(cfg: &RunConfig) -> Result<Vec<Check>> {
    let mut rng = substream(cfg.run.rng_seed, "verify-states");
    let dmax = cfg.attack.verify_max_dim;
    let mut worst_td: f64 = 0.0;
    let mut worst_avg: f64 = 0.0;
    for _ in 0..cfg.attack.verify_states {
        let de = rng.random_range(1..=dmax);
        let da = rng.random_range(1..=dmax);
        let s = random_pure_state(de, da, &mut rng)?;
        let avg = phase_average_A(&s);
        let twice = phase_average_A(&avg);
        worst_avg = worst_avg
            .max((&twice.rho - &avg.rho).iter().map(|c| c.norm()).fold(0.0, f64::max))
            .max((avg.trace() - s.trace()).norm());
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        for delta in [0.1, 0.5, 1.0] {
            for k in -1..=1 {
                let a = eve_reduced_path_i(&s, theta, delta, k)?;
                let b = eve_reduced_path_ii(&s, theta, delta, k, 4 * da)?;
                worst_td = worst_td.max(trace_distance(&a, &b));
            }
        }
    }
    Ok(vec![
        check(
            "phase-randomization-equivalence",
            worst_td < 1e-10,
            format!(
                "{} random pure states, dims <= {dmax}, 3 deltas x 3 bins: max trace distance {worst_td:.3e}",
                cfg.attack.verify_states
            ),
        ),
        check(
            "phase-average",
            worst_avg < 1e-12,
            format!("idempotence and trace preservation: max deviation {worst_avg:.3e}"),
        ),
    ])
}

fn tmsv_separability() -> Result<Check> {
    let s = two_mode_squeezed(0.5, 16, TmsvForm::Correlated)?;
    let pt = min_eigenvalue(&phase_average_A(&s).partial_transpose_a());
    Ok(check(
        "tmsv-separability",
        pt > -1e-12,
        format!("phase-averaged two-mode squeezed state, gamma 0.5: min partial-transpose eigenvalue {pt:.3e}"),
    ))
}

fn leftover_hash(cfg: &RunConfig) -> Result<Check> {
    let m = &cfg.detector.measurement;
    let nominal = crate::detector::adc_resolution_vacuum_units(m, m.conversion_gain, m.lo_power)?;
    let h = vacuum_min_entropy(nominal)?.h_min_bits;
    let mut worst = f64::INFINITY;
    let mut plans = 0;
    let mut targets = vec![(m.adc_bits, h, cfg.extractor.target_bits_per_sample)];
    for tenth in 15..=80 {
        let hh = tenth as f64 / 10.0;
        targets.push((8, hh, hh - 0.1));
        targets.push((8, hh, hh * 0.9));
    }
    for (bits, hh, t) in targets {
        match plan_extraction(bits, hh, cfg.epsilon(), t) {
            Ok(p) => {
                p.validate()?;
                worst = worst.min(p.leftover_hash_slack());
                plans += 1;
            }
            Err(Error::InfeasiblePlan(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(check(
        "leftover-hash",
        worst >= 0.0 && plans > 0,
        format!("{plans} plans (operating point h_min {h:.4}): min slack {worst:.4} bits"),
    ))
}

fn toeplitz_oracle(cfg: &RunConfig) -> Result<Check> {
    let mut rng = substream(cfg.run.rng_seed, "verify-toeplitz");
    let cases = 100;
    let mut ok = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..=2048usize);
        let m = rng.random_range(1..=n);
        let seed: Vec<u8> = (0..n + m - 1).map(|_| rng.random::<bool>() as u8).collect();
        let x: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
        ok += (toeplitz_hash(&x, &seed, m)? == toeplitz_hash_reference(&x, &seed, m)?) as usize;
    }
    Ok(check(
        "toeplitz-oracle",
        ok == cases,
        format!("{ok}/{cases} random instances (n <= 2048) match the naive product"),
    ))
}

fn randomized_lo_variance() -> Check {
    let mut worst = f64::INFINITY;
    let mut zero_exact = false;
    for i in 0..=40 {
        let r = i as f64 * 0.05;
        let v = AttackScenario::displacement_free(r, LoMode::UniformRandom, 0.1, 10_000).theory_variance();
        if i == 0 {
            zero_exact = v == 0.5;
        } else {
            worst = worst.min(v - 0.5);
        }
    }
    check(
        "randomized-lo-variance",
        zero_exact && worst > 0.0,
        format!("cosh(2r)/2 - 1/2 over r in (0, 2]: min excess {worst:.3e}; r = 0 gives 1/2: {zero_exact}"),
    )
}

pub fn run_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let mut checks = vec![fock_scan(cfg)];
    checks.extend(phase_randomization_equivalence(cfg)?);
    checks.push(tmsv_separability()?);
    checks.push(leftover_hash(cfg)?);
    checks.push(toeplitz_oracle(cfg)?);
    checks.push(randomized_lo_variance());
    Ok(checks)
}

pub fn render_checks(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{:<34} {}  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    s
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Vec<Check>> {
    let checks = run_checks(cfg)?;
    let text = render_checks(&checks);
    fsio::write_atomic_str(&out_path(cfg, "verify_report.txt"), &text)?;
    if checks.iter().any(|c| !c.passed) {
        return Err(Error::Verification(text));
    }
    Ok(checks)
}
