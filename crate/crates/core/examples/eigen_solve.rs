//! One bounded-domain eigen solve per exhaustion level, with the
//! Collatz-Wielandt bracket and the fixed-point check.
//!
//! cargo run --example eigen_solve -- [k]

use impulse_control::eigensolver::{check_fixed_point, solve_one_step, SolverOptions};
use impulse_control::fixtures::m3;

fn main() -> impulse_control::Result<()> {
    let k: u32 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("k"));
    let spec = m3();
    for m in 0..=spec.max_level() {
        let sol = solve_one_step(&spec, m, k, &SolverOptions::default())?;
        let fp = check_fixed_point(&spec, &sol)?;
        println!("m = {m}, delta = {}", sol.delta);
        println!("  lambda = {:.12} after {} iterations", sol.lambda, sol.iterations);
        println!("  bracket [{:.15}, {:.15}]", sol.cw_lower, sol.cw_upper);
        println!("  w = {:?}", sol.w);
        println!("  active branches {:?}, max residual {:.2e}", fp.active, fp.max_residual);
    }
    Ok(())
}
