//! Weighted kernels, the semigroup type `r(f)` and resolvent tail bounds
//! on the three-state model.
//!
//! cargo run --example propagator

use impulse_control::fixtures::m3;
use impulse_control::propagator::{resolvent_one, semigroup_type, tail_supremum_bound, weighted_kernel};

fn main() -> impulse_control::Result<()> {
    let spec = m3();
    for k in 0..3 {
        let delta = 0.5f64.powi(k);
        let kernel = weighted_kernel(&spec, delta, 0.0)?;
        println!("K at delta = {delta}:");
        for x in 0..spec.n() {
            let row: Vec<String> = kernel.matrix.row(x).iter().map(|v| format!("{v:.6}")).collect();
            println!("  {}", row.join("  "));
        }
    }
    let r = semigroup_type(&spec)?;
    println!("r(f) = {r:.12}");
    let a = r / 2.0;
    let v = resolvent_one(&spec, &spec.running_cost, a)?;
    println!("resolvent at a = {a:.6}: {v:?}");
    for t in [0.0, 5.0, 20.0, 80.0] {
        println!("tail bound at T = {t:>4}: {:.3e}", tail_supremum_bound(&spec, &spec.running_cost, a, t)?);
    }
    Ok(())
}
