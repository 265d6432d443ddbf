use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavefield::cli::{self, verify, RunManifest};
use wavefield::Result;

#[derive(Parser)]
#[command(name = "wavefield", version, about = "Schrödinger equation, Schrödinger field and constrained theory on a 1D lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the two-field Schrödinger system.
    RunSchrodinger(Common),
    /// Evolve the Schrödinger field from the dequantized initial state.
    RunField(Common),
    /// Evolve the constrained four-field system from on-shell data.
    RunConstrained(Common),
    /// Reconstruct the field from a wave function and check the round trip.
    Dequantize(Common),
    /// Check bracket and correspondence identities; exit status 1 on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Seed for randomized batches (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Measure integrator and residual orders against spectral propagation.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Number of refinement levels (at least 3).
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Plot snapshots of a finished run as SVG.
    Render {
        /// Run directory holding snapshots.csv.
        run_dir: PathBuf,
        /// Steps to render; all when omitted.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
        #[arg(long)]
        quiet: bool,
    },
    /// Dump eigenvalues and the lowest eigenvectors of K.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        modes: usize,
    },
}

fn summarize(m: &RunManifest, out: &Path, quiet: bool) {
    if quiet {
        return;
    }
    println!("{}: {} files in {}", m.command, m.files.len(), out.display());
    for (name, value) in &m.drift {
        println!("  drift {name}: {value:.3e}");
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let run_with = |c: &Common, f: fn(&cli::ScenarioConfig, &Path) -> Result<RunManifest>| -> Result<ExitCode> {
        let cfg = cli::parse_config(&c.config)?;
        let m = f(&cfg, &c.out)?;
        summarize(&m, &c.out, c.quiet);
        Ok(ExitCode::SUCCESS)
    };
    match cli.command {
        Command::RunSchrodinger(c) => run_with(&c, cli::run_schrodinger),
        Command::RunField(c) => run_with(&c, cli::run_field),
        Command::RunConstrained(c) => run_with(&c, cli::run_constrained),
        Command::Dequantize(c) => run_with(&c, cli::run_dequantize),
        Command::Verify { common, seed } => {
            let cfg = cli::parse_config(&common.config)?;
            let report = cli::run_verify(&cfg, seed.unwrap_or(cfg.verify.seed))?;
            verify::write_report(&report, &common.out)?;
            if !common.quiet {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Convergence { common, levels } => {
            let cfg = cli::parse_config(&common.config)?;
            let (studies, _) = cli::run_convergence(&cfg, levels, &common.out)?;
            if !common.quiet {
                for s in &studies {
                    let order = s.order.map_or("n/a".to_string(), |p| format!("{p:.3}"));
                    println!("{:<22} order {order}", s.name);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Render { run_dir, steps, quiet } => {
            let files = cli::render_snapshots(&run_dir, steps.as_deref())?;
            if !quiet {
                println!("rendered {} plots", files.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum { common, modes } => {
            let cfg = cli::parse_config(&common.config)?;
            let m = cli::run_spectrum(&cfg, &common.out, modes)?;
            summarize(&m, &common.out, common.quiet);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
