use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdiqrng::config::RunConfig;
use sdiqrng::pipeline;
use sdiqrng::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sdiqrng",
    version,
    about = "Phase-randomized homodyne QRNG simulator and post-processing"
)]
struct Cli {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides run.output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Toeplitz seed file (overrides extractor.seed_file).
    #[arg(long, global = true)]
    seed_file: Option<PathBuf>,
    /// Master RNG seed (overrides run.rng_seed).
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    /// Worker threads; the results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate raw detector blocks for the configured input state.
    Simulate,
    /// Vacuum power sweep, linear fit, calibration log entry.
    Calibrate,
    /// Filter, requantize and hash the raw blocks into output.bin.
    Extract,
    /// Run the statistical battery on output.bin or --input.
    Test {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Squeezed-state attack with fixed and randomized LO phase.
    Attack,
    /// Numerical self-checks of the security argument.
    Verify,
    /// simulate, calibrate, extract and test in sequence.
    Run,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.run.output_dir = out.clone();
    }
    if let Some(seed) = cli.rng_seed {
        cfg.run.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let cfg = load(cli)?;
    let seed_file = cli.seed_file.as_deref();
    match &cli.command {
        Command::Simulate => print!("{}", pipeline::cmd_simulate(&cfg)?),
        Command::Calibrate => {
            let rec = pipeline::cmd_calibrate(&cfg)?;
            println!(
                "delta {:.6} (conservative {:.6}), certified h_min {:.4} bits",
                rec.result.delta,
                rec.result.delta_conservative,
                rec.result.entropy_bound().h_min_bits
            );
        }
        Command::Extract => print!("{}", pipeline::cmd_extract(&cfg, seed_file)?.report.to_text()),
        Command::Test { input } => print!("{}", pipeline::cmd_test(&cfg, input.as_deref())?.render_table()),
        Command::Attack => {
            let s = pipeline::cmd_attack(&cfg)?;
            println!(
                "fixed LO: variance {:.4}, guess advantage {:.3}; random LO: variance {:.4}, mimicry p {:.3e}",
                s.fixed.measured_variance,
                s.fixed.guess_advantage(),
                s.random.measured_variance,
                s.random.mimicry_pvalue()
            );
        }
        Command::Verify => print!("{}", pipeline::render_checks(&pipeline::cmd_verify(&cfg)?)),
        Command::Run => {
            pipeline::cmd_simulate(&cfg)?;
            pipeline::cmd_calibrate(&cfg)?;
            print!("{}", pipeline::cmd_extract(&cfg, seed_file)?.report.to_text());
            print!("{}", pipeline::cmd_test(&cfg, None)?.render_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sdiqrng: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
