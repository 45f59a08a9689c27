//! The stopping-problem side: the martingale check on the eigen solution
//! and the stopping-iteration value compared with `w`.
//!
//! cargo run --example stopping

use impulse_control::bellman::{lambda_full, residual_horizon, stopping_route, BellmanOptions};
use impulse_control::fixtures::m3;
use impulse_control::operators::apply_m;
use impulse_control::stopping::martingale_check;

fn main() -> impulse_control::Result<()> {
    let spec = m3();
    let sol = lambda_full(&spec, &BellmanOptions::default())?;
    let mart = martingale_check(&spec, sol.finest())?;
    println!("martingale check: {mart:?}");

    let steps = residual_horizon(&spec, &sol, 1e-13)?.expect("nondegenerate model");
    let (mw, _) = apply_m(&spec, &sol.w);
    for horizon in [1, 4, 16, steps] {
        let u = stopping_route(&spec, &sol, horizon)?;
        let gap = u.iter().zip(&sol.w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("u after {horizon:>6} steps: {u:.9?}  |u - w| = {gap:.2e}");
    }
    for ((label, w), mw) in spec.states.iter().zip(&sol.w).zip(&mw) {
        let region = if *w > mw + 1e-9 { "continue" } else { "stop" };
        println!("{label}: w = {w:.6}, Mw = {mw:.6}, {region}");
    }
    Ok(())
}
