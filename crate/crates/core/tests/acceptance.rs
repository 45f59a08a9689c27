//! Acceptance suite. Prints one line per criterion and exits nonzero if
//! any criterion fails.
//!
//! cargo test --release --test acceptance

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use impulse_control::bellman::{
    bellman_residual, lambda_full, residual_horizon, BellmanOptions, BellmanSolution, LADDER_TOL,
};
use impulse_control::eigensolver::check_fixed_point;
use impulse_control::fixtures::{m1, m2, m2_prohibitive, m3, random_model, RandomModelShape};
use impulse_control::model::{normalize_running_cost, ModelSpec};
use impulse_control::policy::{chained_jump_check, oracle_lambda, strategy_from_solution, Policy, DEFAULT_ENUMERATION_CAP};
use impulse_control::simulator::{run_simulation, SimConfig};
use impulse_control::stopping::{martingale_check, CONTINUATION_TOL};

const CORPUS_SIZE: usize = 60;
const CORPUS_SEED: u64 = 0x5eed_0001;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Corpus {
    models: Vec<ModelSpec>,
    solutions: Vec<BellmanSolution>,
}

fn corpus() -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let mut models = vec![m2(), m3()];
    models.extend((0..CORPUS_SIZE).map(|_| random_model(&mut rng, RandomModelShape::default())));
    let solutions = models
        .iter()
        .map(|s| lambda_full(s, &BellmanOptions::default()).expect("corpus model solves"))
        .collect();
    Corpus { models, solutions }
}

/// AC-1 and AC-9 share the oracle tables.
fn oracle_equivalence(c: &Corpus) -> (Verdict, Verdict) {
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    let mut chained = 0;
    let mut worst_chain_vs_collapsed = f64::NEG_INFINITY;
    let mut worst_chain_vs_best = f64::NEG_INFINITY;
    for (spec, sol) in c.models.iter().zip(&c.solutions) {
        for entry in &sol.ladder {
            let level = (entry.m < spec.max_level()).then_some(entry.m);
            let oracle = oracle_lambda(spec, entry.k, level, DEFAULT_ENUMERATION_CAP).unwrap();
            worst = worst.max((oracle.best_value - entry.lambda).abs());
            pairs += 1;
            let report = chained_jump_check(spec, &oracle).unwrap();
            chained += report.checked;
            worst_chain_vs_collapsed = worst_chain_vs_collapsed.max(report.max_gain_over_collapsed);
            worst_chain_vs_best = worst_chain_vs_best.max(report.max_gain_over_best);
        }
    }
    (
        verdict(
            worst <= 1e-8,
            format!("{} models, {pairs} (m, k) pairs, max |eigen - oracle| = {worst:.3e} (tol 1e-8)", c.models.len()),
        ),
        verdict(
            worst_chain_vs_collapsed <= 1e-12 && worst_chain_vs_best <= 1e-12,
            format!(
                "{chained} chained policies, max gain over collapsed = {worst_chain_vs_collapsed:.3e}, over best = {worst_chain_vs_best:.3e} (tol 1e-12)"
            ),
        ),
    )
}

fn all_solves(c: &Corpus) -> Vec<(usize, impulse_control::EigenSolution)> {
    c.models
        .iter()
        .enumerate()
        .flat_map(|(i, spec)| {
            let opts = impulse_control::SolverOptions::default();
            spec.grid_levels
                .iter()
                .flat_map(move |&k| (0..=spec.max_level()).map(move |m| (m, k)))
                .map(move |(m, k)| (i, impulse_control::solve_one_step(spec, m, k, &opts).unwrap()))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn fixed_point_residuals(c: &Corpus, solves: &[(usize, impulse_control::EigenSolution)]) -> Verdict {
    let worst = solves
        .iter()
        .map(|(i, s)| check_fixed_point(&c.models[*i], s).unwrap().max_residual)
        .fold(0.0, f64::max);
    verdict(worst <= 1e-12, format!("{} solves, max residual = {worst:.3e} (tol 1e-12)", solves.len()))
}

fn martingale(c: &Corpus, solves: &[(usize, impulse_control::EigenSolution)]) -> Verdict {
    let mut sup: f64 = f64::NEG_INFINITY;
    let mut mart: f64 = 0.0;
    for (i, s) in solves {
        let r = martingale_check(&c.models[*i], s).unwrap();
        sup = sup.max(r.max_super_violation);
        mart = mart.max(r.max_mart_residual_on_continuation);
    }
    verdict(
        sup <= 1e-12 && mart <= 1e-12,
        format!("supermartingale excess = {sup:.3e}, continuation residual = {mart:.3e} (tol 1e-12)"),
    )
}

fn ladders(c: &Corpus, solves: &[(usize, impulse_control::EigenSolution)]) -> Verdict {
    let mut m_drop: f64 = 0.0;
    let mut k_drop: f64 = 0.0;
    let mut below_rf: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for (spec, sol) in c.models.iter().zip(&c.solutions) {
        for &k in &spec.grid_levels {
            let row: Vec<f64> = sol.ladder.iter().filter(|e| e.k == k).map(|e| e.lambda).collect();
            for w in row.windows(2) {
                m_drop = m_drop.max(w[0] - w[1]);
            }
        }
        if !sol.degenerate {
            for w in sol.lambda_by_k.windows(2) {
                k_drop = k_drop.max(w[0].1 - w[1].1);
            }
        }
        below_rf = below_rf.max(sol.r_f - sol.lambda);
    }
    for (i, s) in solves {
        let spec = &c.models[*i];
        let top = spec.impulse_set.iter().map(|&u| s.w[u]).fold(f64::NEG_INFINITY, f64::max);
        norm = norm.max(top.abs());
    }
    verdict(
        m_drop <= LADDER_TOL && k_drop <= LADDER_TOL && below_rf <= 1e-9 && norm <= 1e-9,
        format!(
            "max drop in m = {m_drop:.3e}, in k = {k_drop:.3e}, max r(f) - lambda = {below_rf:.3e}, max |sup_U w| = {norm:.3e} (tol 1e-9)"
        ),
    )
}

fn two_routes(c: &Corpus) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for (spec, sol) in c.models.iter().zip(&c.solutions) {
        if sol.degenerate {
            continue;
        }
        match residual_horizon(spec, sol, 1e-13).unwrap() {
            Some(steps) if steps <= 50_000_000 => {
                worst = worst.max(bellman_residual(spec, sol, steps).unwrap());
                checked += 1;
            }
            _ => skipped += 1,
        }
    }
    verdict(
        worst <= 1e-8 && skipped == 0,
        format!("{checked} nondegenerate models, max |w_eigen - w_stopping| = {worst:.3e} (tol 1e-8), {skipped} skipped"),
    )
}

fn monte_carlo() -> Verdict {
    let spec = m2();
    let sol = lambda_full(&spec, &BellmanOptions::default()).unwrap();
    let optimal = strategy_from_solution(&spec, &sol, CONTINUATION_TOL).unwrap();
    let mut config = SimConfig::new(200.0, 200_000, 20240501, spec.impulse_set[0], sol.k);
    config.ladder.clear();
    let opt = run_simulation(&spec, &optimal, &config).unwrap().estimate;
    let never = run_simulation(&spec, &Policy::never_impulse(spec.n()), &config).unwrap().estimate;
    let band = f64::max(3.0 * opt.stderr, 5e-3);
    let gap = sol.lambda - opt.point;
    let separation = opt.point - never.point;
    let needed = 5.0 * (opt.stderr + never.stderr);
    verdict(
        (0.0..=band).contains(&gap) && separation >= needed,
        format!(
            "lambda = {:.6}, J(optimal) = {:.6} +- {:.6}, lambda - J = {gap:.3e} in [0, {band:.3e}]; J(never) = {:.6} +- {:.6}, separation {separation:.4} >= {needed:.4}",
            sol.lambda, opt.point, opt.stderr, never.point, never.stderr
        ),
    )
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_impulse"))
}

fn degeneracy(tmp: &Path) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec) in [("m1", m1()), ("m2_prohibitive", m2_prohibitive())] {
        let sol = lambda_full(&spec, &BellmanOptions::default()).unwrap();
        let gap = (sol.lambda - sol.r_f).abs();
        let no_strategy = strategy_from_solution(&spec, &sol, CONTINUATION_TOL).is_err();
        let model = tmp.join(format!("{name}.toml"));
        fs::write(&model, spec.to_toml()).unwrap();
        let out = tmp.join(format!("{name}_run"));
        let status = binary().arg("solve").arg(&model).arg("--out").arg(&out).output().unwrap().status;
        let code = status.code();
        let no_policy_file = !out.join("policy.csv").exists();
        ok &= sol.degenerate && gap <= 1e-9 && code == Some(2) && no_strategy && no_policy_file;
        parts.push(format!(
            "{name}: degenerate = {}, |lambda - r(f)| = {gap:.3e}, exit {code:?}, strategy withheld = {}",
            sol.degenerate,
            no_strategy && no_policy_file
        ));
    }
    verdict(ok, parts.join("; "))
}

fn offset_equivariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED ^ 8);
    let mut worst_lambda: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    let mut policies_equal = true;
    for _ in 0..10 {
        let spec = random_model(&mut rng, RandomModelShape::default());
        let raw: Vec<f64> = spec.running_cost.iter().map(|f| f + rng.random_range(0.0..3.0)).collect();
        let (f, offset) = normalize_running_cost(&raw).unwrap();
        let a = lambda_full(&spec.with_running_cost(raw), &BellmanOptions::default()).unwrap();
        let b = lambda_full(&spec.with_running_cost(f), &BellmanOptions::default()).unwrap();
        worst_lambda = worst_lambda.max((a.lambda - (b.lambda + offset)).abs());
        worst_w = worst_w.max(a.w.iter().zip(&b.w).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        policies_equal &= Policy::from_values(&spec, &a.w, CONTINUATION_TOL, None)
            == Policy::from_values(&spec, &b.w, CONTINUATION_TOL, None);
    }
    verdict(
        worst_lambda <= 1e-10 && worst_w <= 1e-10 && policies_equal,
        format!("10 models, max lambda error = {worst_lambda:.3e}, max w error = {worst_w:.3e} (tol 1e-10), identical policies = {policies_equal}"),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility(tmp: &Path) -> Verdict {
    let model = tmp.join("m2.toml");
    fs::write(&model, m2().to_toml()).unwrap();
    let mut runs = Vec::new();
    for run in ["first", "second"] {
        let out = tmp.join(run);
        let solve = binary().arg("solve").arg(&model).arg("--out").arg(&out).output().unwrap();
        let sim = binary()
            .args(["simulate", "--trajectories", "20000", "--horizon", "50", "--seed", "7", "--out"])
            .arg(&out)
            .arg(&model)
            .output()
            .unwrap();
        assert!(solve.status.success() && sim.status.success(), "{sim:?}");
        runs.push(csv_files(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    verdict(
        runs[0] == runs[1] && names.len() >= 3,
        format!("solve + simulate twice: {} CSV files byte-identical = {}", names.join(", "), runs[0] == runs[1]),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let c = corpus();
    let solves = all_solves(&c);
    let t1 = Instant::now();
    let (ac1, ac9) = oracle_equivalence(&c);
    let ac1_time = t1.elapsed();

    let results = [
        ("AC-1", ac1),
        ("AC-2", fixed_point_residuals(&c, &solves)),
        ("AC-3", martingale(&c, &solves)),
        ("AC-4", ladders(&c, &solves)),
        ("AC-5", two_routes(&c)),
        ("AC-6", monte_carlo()),
        ("AC-7", degeneracy(tmp.path())),
        ("AC-8", offset_equivariance()),
        ("AC-9", ac9),
        ("AC-10", reproducibility(tmp.path())),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("{name:<6} {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "{} of {} criteria passed in {:.1?} (oracle sweep {:.1?})",
        results.len() - failed,
        results.len(),
        started.elapsed(),
        ac1_time
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
