//! Exhaustive enumeration of stationary grid policies on the three-state
//! model, compared with the eigen solution and the extracted strategy.
//!
//! cargo run --example policy_oracle -- [k]

use impulse_control::bellman::lambda_delta;
use impulse_control::eigensolver::SolverOptions;
use impulse_control::fixtures::m3;
use impulse_control::policy::{
    chained_jump_check, oracle_lambda, policy_growth_rate, strategy_from_eigen, DEFAULT_ENUMERATION_CAP,
};

fn main() -> impulse_control::Result<()> {
    let k: u32 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("k"));
    let spec = m3();
    let (lambda, per_m) = lambda_delta(&spec, k, &SolverOptions::default())?;
    for (m, eig) in per_m.iter().enumerate() {
        let level = (m < spec.max_level()).then_some(m);
        let res = oracle_lambda(&spec, k, level, DEFAULT_ENUMERATION_CAP)?;
        let mut rows: Vec<_> = res.table.iter().collect();
        rows.sort_by(|a, b| b.value.total_cmp(&a.value));
        println!("m = {m}: {} policies, best {} = {:.12}", res.table.len(), res.best_policy, res.best_value);
        for row in rows.iter().take(5) {
            println!("    {:<10} {:.12}", row.policy.to_string(), row.value);
        }
        let p = strategy_from_eigen(&spec, eig, 1e-9);
        println!(
            "  eigen lambda = {:.12}, extracted strategy {p} grows at {:.12}",
            eig.lambda,
            policy_growth_rate(&spec, &p, k)?
        );
        let chain = chained_jump_check(&spec, &res)?;
        println!(
            "  {} chained policies, best gain over collapsed {:.3e}",
            chain.checked, chain.max_gain_over_collapsed
        );
    }
    println!("lambda_delta = {lambda:.12}");
    Ok(())
}
