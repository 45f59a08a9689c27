//! Monte Carlo estimate of the long-run risk-sensitive value on the
//! two-state model, for the optimal strategy and for never shifting.
//!
//! cargo run --release --example monte_carlo -- [horizon] [trajectories]

use impulse_control::fixtures::m2;
use impulse_control::simulator::{exact_log_moment, run_simulation, SimConfig};
use impulse_control::{lambda_full, strategy_from_solution, BellmanOptions, Policy};

fn main() -> impulse_control::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let horizon: f64 = args.first().map_or(200.0, |s| s.parse().expect("horizon"));
    let trajectories: usize = args.get(1).map_or(200_000, |s| s.parse().expect("trajectories"));

    let spec = m2();
    let sol = lambda_full(&spec, &BellmanOptions::default())?;
    let optimal = strategy_from_solution(&spec, &sol, 1e-9)?;
    println!("lambda = {:.6}  r(f) = {:.6}  policy = {optimal}", sol.lambda, sol.r_f);

    let config = SimConfig::new(horizon, trajectories, 20240501, 0, sol.k);
    for (name, policy) in [("optimal", optimal), ("never", Policy::never_impulse(spec.n()))] {
        let run = run_simulation(&spec, &policy, &config)?;
        let exact = exact_log_moment(&spec, &policy, &config)?;
        let e = &run.estimate;
        println!(
            "{name:>8}: J = {:.6} +- {:.6}  exact finite-T = {:.6}  impulses/time = {:.3}  burst = {}",
            e.point, e.stderr, exact, e.impulse_rate.mean, e.max_burst
        );
        for (t, p, se) in &run.ladder {
            println!("          T = {t:>7.2}  J = {p:.6} +- {se:.6}");
        }
    }
    Ok(())
}
