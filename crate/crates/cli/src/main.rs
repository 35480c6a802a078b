//! `sectorial`: verification campaigns and parabolic solves from a JSON config.

mod bessel;
mod config;
mod failure;
mod ibp;
mod integrals;
mod output;
mod svg;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{load, LoadedConfig, RunConfig};
use failure::{Failure, EXIT_TOLERANCE};
use output::OutDir;

#[derive(Parser)]
#[command(name = "sectorial", version, about = "Sector scans, analytic semigroups and Bessel checks on discrete manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed for probes and samples (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Scan ‖G_λ‖ and the defect over rays × moduli and fit decay slopes.
    VerifySector,
    /// Evolve u₀ under the analytic semigroup and dump u(t) per time.
    SolveIbp,
    /// Bessel identities, envelope bound, ODE residual and timings.
    BenchBessel,
    /// Decay exponents of the kernel integrals behind the G_λ estimate.
    ScanKernelIntegrals,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifySector => "verify-sector",
            Command::SolveIbp => "solve-ibp",
            Command::BenchBessel => "bench-bessel",
            Command::ScanKernelIntegrals => "scan-kernel-integrals",
        }
    }
}

/// What a command hands back for `meta.json`.
pub struct Outcome {
    /// Quantities derived while building the problem (ε, h, ...).
    pub resolved: Value,
    pub result: Value,
    pub passed: bool,
    pub summary: String,
}

fn prepare(cli: &Cli) -> Result<(LoadedConfig, OutDir), Failure> {
    let mut loaded = load(cli.config.as_deref())?;
    let c = &mut loaded.config;
    if let Some(out) = &cli.out {
        c.output_dir = out.clone();
        loaded.defaulted.retain(|f| f != "output_dir");
    }
    if let Some(seed) = cli.seed {
        c.seed = seed;
        loaded.defaulted.retain(|f| f != "seed");
    }
    c.validate()?;
    let out = OutDir::create(&c.output_dir)?;
    Ok((loaded, out))
}

fn dispatch(command: Command, config: &RunConfig, out: &OutDir) -> Result<Outcome, Failure> {
    match command {
        Command::VerifySector => verify::run(config, out),
        Command::SolveIbp => ibp::run(config, out),
        Command::BenchBessel => bessel::run(config, out),
        Command::ScanKernelIntegrals => integrals::run(config, out),
    }
}

fn meta(command: Command, loaded: &LoadedConfig, outcome: Option<&Outcome>, failure: Option<&Failure>, seconds: f64) -> Value {
    json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": loaded.config,
        "defaulted": loaded.defaulted,
        "resolved": outcome.map(|o| &o.resolved),
        "result": outcome.map(|o| &o.result),
        "passed": outcome.map(|o| o.passed),
        "failure": failure,
        "wall_seconds": seconds,
    })
}

fn fail(out: Option<&OutDir>, f: &Failure) -> ExitCode {
    eprintln!("{}", serde_json::to_string(f).expect("serializable"));
    if let Some(out) = out {
        let _ = out.write_json("failure.json", f);
    }
    ExitCode::from(f.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (loaded, out) = match prepare(&cli) {
        Ok(v) => v,
        Err(f) => {
            // Still leave a record where the user asked for output.
            let out = cli.out.as_deref().and_then(|p| OutDir::create(p).ok());
            return fail(out.as_ref(), &f);
        }
    };
    let start = Instant::now();
    let outcome = dispatch(cli.command, &loaded.config, &out);
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(o) => {
            let failure = (!o.passed).then(|| Failure::tolerance(o.summary.clone(), o.result.clone()));
            if let Err(f) = out.write_json("meta.json", &meta(cli.command, &loaded, Some(&o), failure.as_ref(), seconds)) {
                return fail(Some(&out), &f);
            }
            println!("{}: {} ({})", cli.command.name(), if o.passed { "pass" } else { "FAIL" }, o.summary);
            match failure {
                None => ExitCode::SUCCESS,
                Some(f) => {
                    debug_assert_eq!(f.exit_code, EXIT_TOLERANCE);
                    fail(Some(&out), &f)
                }
            }
        }
        Err(f) => {
            let _ = out.write_json("meta.json", &meta(cli.command, &loaded, None, Some(&f), seconds));
            fail(Some(&out), &f)
        }
    }
}
