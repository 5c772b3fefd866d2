//! `confocal`: scenario-driven front end for the cavity simulator.
//!
//! Every subcommand reads one scenario (a builtin name or a TOML file),
//! runs a pipeline from the core library, prints a short summary and
//! writes its full results under the output directory. Outputs are
//! byte-deterministic for a fixed scenario and seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use confocal_core::scenario::{builtin_scenario, parse_scenario, Scenario, BUILTIN_SCENARIOS};
use confocal_core::{Error, GrapheneConvention, Result};

mod commands;

#[derive(Parser)]
#[command(
    name = "confocal",
    version,
    about = "Multimode confocal cavity simulator and lock metrology toolkit"
)]
struct Cli {
    /// Scenario: a builtin name or a path to a TOML file.
    #[arg(long, global = true, default_value = "science-cavity")]
    scenario: String,

    /// Output directory (defaults to the scenario's own setting).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for synthetic noise and randomized inputs.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Worker threads for the linear-algebra stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmission spectra at each configured length ratio.
    Spectrum,
    /// Most localized supermode of the configured family.
    Supermode,
    /// Finesse at the named probe sites of the device mask.
    FinesseMap,
    /// Image the scenario mask through the cavity.
    Image {
        /// Object mask file overriding the scenario mask.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Error-signal trace to PSD to in-band displacement.
    LockNoise,
    /// Drive/response line fit and sample-displacement extraction.
    VibrationFit {
        /// Sample motion injected into the synthetic drive series, nm.
        #[arg(long, default_value_t = 6.0)]
        inject_nm: f64,
        /// Number of drive points.
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Gaussian response noise, MHz RMS.
        #[arg(long, default_value_t = 0.2)]
        noise_mhz: f64,
    },
    /// Write the builtin contacted-device mask to a file.
    GenMask {
        /// Graphene loss accounting: per-pass or per-round-trip.
        #[arg(long, default_value = "per-pass")]
        convention: String,
    },
}

fn resolve_scenario(name: &str) -> Result<Scenario> {
    if BUILTIN_SCENARIOS.contains(&name) {
        return builtin_scenario(name);
    }
    let path = Path::new(name);
    if path.exists() {
        return parse_scenario(path);
    }
    Err(Error::Input(format!(
        "scenario {name:?} is neither a file nor a builtin ({})",
        BUILTIN_SCENARIOS.join(", ")
    )))
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // Ignore the error when a pool already exists (repeated calls in
        // tests); the first configuration wins.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let scenario = resolve_scenario(&cli.scenario)?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| scenario.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    match &cli.command {
        Command::Spectrum => commands::spectrum(&scenario, &out),
        Command::Supermode => commands::supermode(&scenario, &out),
        Command::FinesseMap => commands::finesse_map(&scenario, &out),
        Command::Image { scene } => commands::image(&scenario, &out, scene.as_deref()),
        Command::LockNoise => commands::lock_noise(&scenario, &out, cli.seed),
        Command::VibrationFit {
            inject_nm,
            points,
            noise_mhz,
        } => commands::vibration_fit(&scenario, &out, cli.seed, *inject_nm, *points, *noise_mhz),
        Command::GenMask { convention } => {
            let convention = GrapheneConvention::parse(convention).ok_or_else(|| {
                Error::Input(format!(
                    "convention must be \"per-pass\" or \"per-round-trip\", got {convention:?}"
                ))
            })?;
            commands::gen_mask(&scenario, &out, convention)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
