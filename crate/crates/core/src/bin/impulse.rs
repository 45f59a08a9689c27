use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use impulse_control::bellman::BellmanOptions;
use impulse_control::eigensolver::SolverOptions;
use impulse_control::policy::DEFAULT_ENUMERATION_CAP;
use impulse_control::report::{
    cmd_oracle, cmd_report, cmd_simulate, cmd_solve, OracleFlags, PolicyChoice, RunFlags, SimulateFlags, ERROR_EXIT,
};

/// Long-run risk-sensitive impulse control on finite-state Markov chains.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Relative Collatz-Wielandt tolerance of the eigen solver.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Runs with λ - r(f) below this are reported as degenerate.
    #[arg(long, default_value_t = 1e-7)]
    degeneracy_margin: f64,
    /// Run directory for artifacts.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

impl Shared {
    fn flags(&self) -> RunFlags {
        RunFlags {
            options: BellmanOptions {
                solver: SolverOptions {
                    tol: self.tol,
                    max_iters: self.max_iters,
                    ..SolverOptions::default()
                },
                degeneracy_margin: self.degeneracy_margin,
            },
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for λ, w and the optimal strategy.
    Solve {
        model: PathBuf,
        #[command(flatten)]
        shared: Shared,
        /// Also write the weighted kernel of every grid level.
        #[arg(long)]
        dump_kernels: bool,
    },
    /// Enumerate stationary policies and compare with the eigen route.
    Oracle {
        model: PathBuf,
        #[command(flatten)]
        shared: Shared,
        /// Restrict to policies that shift on every exit from B_level.
        #[arg(long)]
        level: Option<usize>,
        /// Dyadic exponent; defaults to the finest grid level.
        #[arg(long)]
        grid_k: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
        #[arg(long, default_value_t = 1e-8)]
        oracle_tol: f64,
    },
    /// Monte Carlo estimate of the long-run value of a policy.
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        shared: Shared,
        /// `optimal` (needs a prior solve), `never`, or tokens like "C J0".
        #[arg(long, default_value = "optimal")]
        policy: String,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        #[arg(long, default_value_t = 200_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start state label or index; defaults to the first impulse target.
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        grid_k: Option<u32>,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        decide_at_zero: bool,
        #[arg(long)]
        jump_time_mode: bool,
    },
    /// Write plot-ready CSV files for a run directory.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Solve {
            model,
            shared,
            dump_kernels,
        } => cmd_solve(&model, &shared.flags(), dump_kernels, &mut stdout),
        Command::Oracle {
            model,
            shared,
            level,
            grid_k,
            cap,
            oracle_tol,
        } => cmd_oracle(
            &model,
            &shared.flags(),
            &OracleFlags {
                k: grid_k,
                level,
                cap,
                tolerance: oracle_tol,
            },
            &mut stdout,
        ),
        Command::Simulate {
            model,
            shared,
            policy,
            horizon,
            trajectories,
            seed,
            start,
            grid_k,
            decide_at_zero,
            jump_time_mode,
        } => policy.parse::<PolicyChoice>().and_then(|policy| {
            cmd_simulate(
                &model,
                &shared.flags(),
                &SimulateFlags {
                    policy,
                    horizon,
                    trajectories,
                    seed,
                    start,
                    grid_k,
                    decide_at_zero,
                    jump_time_mode,
                },
                &mut stdout,
            )
        }),
        Command::Report { run_dir } => cmd_report(&run_dir, &mut stdout),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT as u8)
        }
    }
}
