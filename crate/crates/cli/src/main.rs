//! `fraclap`: kernel precomputation, operator application, Dirichlet solves,
//! convergence benchmarks, Allen-Cahn and denoising from the command line.
//!
//! Exit codes: 0 ok, 2 usage or configuration, 3 I/O or file format,
//! 4 numerical failure (CG did not converge).

mod commands;
mod kernels;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fraclap::Error;

#[derive(Parser, Debug)]
#[command(name = "fraclap", version = manifest::VERSION, about = "Sinc-basis fractional Laplacian toolkit")]
struct Cli {
    /// Worker threads for kernel assembly and FFTs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble a convolution kernel and write it to a cache file.
    Kernel(commands::KernelCmd),
    /// Apply the operator to a grid file.
    Apply(commands::ApplyCmd),
    /// Solve the Dirichlet problem on a masked domain.
    Solve(commands::SolveCmd),
    /// Convergence study on the disc or the L-shape.
    Bench(commands::BenchCmd),
    /// Fractional Allen-Cahn evolution in one dimension.
    AllenCahn(commands::AllenCahnCmd),
    /// Fractional-regularized denoising of a PGM image.
    Denoise(commands::DenoiseCmd),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Format(_) => 3,
        Error::Numerical(_) => 4,
        Error::Index(_) | Error::Geometry(_) | Error::Shape(_) | Error::Config(_) | Error::Domain(_) => 2,
    }
}

fn run(cli: Cli) -> fraclap::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Kernel(c) => c.run(),
        Command::Apply(c) => c.run(),
        Command::Solve(c) => c.run(),
        Command::Bench(c) => c.run(),
        Command::AllenCahn(c) => c.run(),
        Command::Denoise(c) => c.run(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
