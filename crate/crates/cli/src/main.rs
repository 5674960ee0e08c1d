mod commands;
mod config;
mod specs;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use derham_shape::Error;

use config::{Options, RunConfig};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "DERHAM_SHAPE_THREADS";

#[derive(Parser)]
#[command(name = "derham-shape", version, about = "Whitney-form spectra and eigenvalue shape derivatives on tetrahedral meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a cube mesh with a Γt tagging as JSON.
    MeshGen(Options),
    /// Positive spectrum of one problem.
    Spectrum(Options),
    /// Hadamard shape derivative of one eigenvalue.
    ShapeGrad(Options),
    /// Hadamard formula against central differences.
    FdCheck(Options),
    /// Deformed-mesh vs transformed-coefficient spectra and masses.
    EquivalenceCheck(Options),
    /// Discrete Helmholtz split of an edge field.
    Helmholtz(Options),
    /// Run the invariant checks on one configuration.
    Verify(Options),
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV}: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("{THREADS_ENV}: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let (opts, f): (Options, fn(&RunConfig) -> Result<()>) = match cli.command {
        Command::MeshGen(o) => (o, commands::mesh_gen),
        Command::Spectrum(o) => (o, commands::spectrum),
        Command::ShapeGrad(o) => (o, commands::shape_grad),
        Command::FdCheck(o) => (o, commands::fd_check_cmd),
        Command::EquivalenceCheck(o) => (o, commands::equivalence_check),
        Command::Helmholtz(o) => (o, commands::helmholtz),
        Command::Verify(o) => (o, commands::verify),
    };
    let cfg = RunConfig::from_options(opts.merged()?)?;
    f(&cfg)
}

/// Machine-readable code and exit status for an error chain.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return (e.code(), e.exit_code() as u8);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("E_IO", 23);
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return ("E_SERIALIZE", 24);
        }
    }
    ("E_INTERNAL", 1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, status) = classify(&err);
            eprintln!("error[{code}]: {err:#}");
            ExitCode::from(status)
        }
    }
}
