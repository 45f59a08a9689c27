//! The full `(m, k)` ladder, the degeneracy test and the dyadic refinement
//! gaps, for the bundled models or a model file.
//!
//! cargo run --example bellman_ladder -- [model.toml]

use impulse_control::bellman::{lambda_full, BellmanOptions};
use impulse_control::fixtures::{m1, m2, m3};
use impulse_control::model::load_model_path;

fn main() -> impulse_control::Result<()> {
    let models = match std::env::args().nth(1) {
        Some(path) => vec![(path.clone(), load_model_path(&path)?)],
        None => vec![("m1".into(), m1()), ("m2".into(), m2()), ("m3".into(), m3())],
    };
    for (name, spec) in models {
        let sol = lambda_full(&spec, &BellmanOptions::default())?;
        println!("{name}: lambda = {:.12}, r(f) = {:.12}, degenerate = {}", sol.lambda, sol.r_f, sol.degenerate);
        println!("  {:>3} {:>3} {:>16} {:>10} {:>6}", "m", "k", "lambda", "residual", "iters");
        for e in &sol.ladder {
            println!("  {:>3} {:>3} {:>16.12} {:>10.2e} {:>6}", e.m, e.k, e.lambda, e.residual, e.iterations);
        }
        for g in &sol.convergence {
            println!(
                "  k {} -> {}: lambda gap {:.3e}, Mw gap {:.3e}, w gap {:.3e}",
                g.k, g.k_next, g.lambda_gap, g.mw_gap, g.w_gap
            );
        }
    }
    Ok(())
}
