//! Risk-sensitive impulse control of finite-state continuous-time Markov
//! chains: dyadic-grid eigenproblems, their stopping-problem
//! characterization, a brute-force policy oracle and a Monte Carlo check.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod eigensolver;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod policy;
pub mod propagator;
pub mod report;
pub mod simulator;
pub mod stopping;

pub use bellman::{lambda_delta, lambda_full, BellmanOptions, BellmanSolution};
pub use eigensolver::{solve_one_step, EigenSolution, SolverOptions};
pub use error::{Error, Result};
pub use model::{load_model, load_model_path, validate_model, ModelSpec};
pub use policy::{oracle_lambda, policy_growth_rate, strategy_from_solution, Action, Policy};
pub use simulator::{estimate_j, run_simulation, SimConfig};
