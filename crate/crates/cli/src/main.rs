//! Batch runs for cat-qubit QAOA.
//!
//! Each command writes into its own directory under `--out` together with a
//! `manifest.json` holding the resolved configuration and its hash.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use catqaoa::experiments::FIDELITY_ANGLES;
use catqaoa::knr_gates::DEFAULT_KAPPA;
use catqaoa::qaoa::BackendKind;

use commands::{QaoaArgs, RunContext, ToyArgs};
use config::Physics;

#[derive(Parser, Debug)]
#[command(name = "catqaoa", version, about = "QAOA on Kerr-resonator cat qubits")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Cat amplitude; the two-photon drive is set to K·α².
    #[arg(long, global = true, default_value_t = 2.0)]
    alpha: f64,
    /// Single-photon loss rate in units of K.
    #[arg(long, global = true, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// Fock levels per mode.
    #[arg(long, global = true, default_value_t = 20)]
    dim: usize,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "CATQAOA_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the R_Y envelope and R_X detuning map, then sweep every gate's
    /// fidelity with and without loss.
    Calibrate {
        /// Detuning amplitudes in the R_X map.
        #[arg(long, default_value_t = 60)]
        rx_points: usize,
        #[arg(long, default_value_t = FIDELITY_ANGLES)]
        angles: usize,
    },
    /// Tabulate Kraus noise for the cat gates and for matched standard qubits.
    BuildNoiseLibrary {
        /// Also tabulate R_Z and R_Y, needed to replay the toy circuits.
        #[arg(long)]
        toy_gates: bool,
    },
    /// Optimize QAOA on random MaxCut graphs and replay on noisy backends.
    Qaoa(QaoaCmd),
    /// Bosonic QAOA benchmarks: single spin and cat preparation.
    AppendixC {
        /// Points per angle axis.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = 2)]
        p_max: usize,
    },
}

#[derive(Args, Debug)]
struct QaoaCmd {
    #[arg(long, default_value_t = 30)]
    instances: usize,
    #[arg(long, default_value_t = 8)]
    vertices: usize,
    #[arg(long, default_value_t = 0.5)]
    edge_prob: f64,
    #[arg(long, default_value_t = 5)]
    p_max: usize,
    /// Points per axis of the depth-one parameter grid.
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Backend::Ideal, Backend::Cat, Backend::Standard])]
    backend: Vec<Backend>,
    /// Run the two-qubit Exact Cover rows instead of MaxCut.
    #[arg(long)]
    toy: bool,
    /// With --toy: skip the master-equation columns.
    #[arg(long, requires = "toy")]
    no_master: bool,
    /// With --toy: add the loss-free master-equation column.
    #[arg(long, requires = "toy", conflicts_with = "no_master")]
    loss_free: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Ideal,
    Cat,
    Standard,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Ideal => BackendKind::Ideal,
            Backend::Cat => BackendKind::Cat,
            Backend::Standard => BackendKind::Standard,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ctx = RunContext {
        physics: Physics { alpha: c.alpha, kerr: 1.0, kappa: c.kappa, dim: c.dim },
        seed: c.seed,
        out: c.out.clone(),
    };
    match cli.command {
        Command::Calibrate { rx_points, angles } => commands::calibrate(&ctx, rx_points, angles),
        Command::BuildNoiseLibrary { toy_gates } => commands::build_noise_library(&ctx, toy_gates),
        Command::Qaoa(q) if q.toy => commands::qaoa_toy(
            &ctx,
            &ToyArgs { grid: q.grid, master_equation: !q.no_master, loss_free: q.loss_free },
        ),
        Command::Qaoa(q) => {
            let mut backends: Vec<BackendKind> = Vec::new();
            for b in q.backend {
                if !backends.contains(&b.into()) {
                    backends.push(b.into());
                }
            }
            commands::qaoa(
                &ctx,
                &QaoaArgs {
                    instances: q.instances,
                    vertices: q.vertices,
                    edge_prob: q.edge_prob,
                    p_max: q.p_max,
                    grid: q.grid,
                    backends,
                },
            )
        }
        Command::AppendixC { grid, p_max } => commands::appendix_c(&ctx, grid, p_max),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["catqaoa", "qaoa", "--backend", "cat,ideal", "--dim", "12", "--p-max", "3"]).unwrap();
        assert_eq!(cli.common.dim, 12);
        let Command::Qaoa(q) = cli.command else { panic!() };
        assert_eq!(q.backend, vec![Backend::Cat, Backend::Ideal]);
        assert_eq!(q.p_max, 3);
        assert!(Cli::try_parse_from(["catqaoa", "qaoa", "--no-master"]).is_err());
    }
}
