//! Run orchestration behind the `impulse` binary: solve, oracle, simulate
//! and report, each reading a model file and writing artifacts into a run
//! directory.
//!
//! Artifacts written per run directory:
//!
//! | file | writer | content |
//! |------|--------|---------|
//! | `solution.json` | solve | `λ`, `r(f)`, degeneracy, `w`, `M w`, ladder, diagnostics |
//! | `ladder.csv` | solve | `m,k,lambda,residual,iterations` |
//! | `policy.csv` | solve | `state,label,action,target,w,mw` (nondegenerate only) |
//! | `kernel_k{k}.csv` | solve `--dump-kernels` | weighted kernel rows |
//! | `oracle.csv` | oracle | `policy,value,per_state` |
//! | `oracle.json` | oracle | best policy and the comparison |
//! | `simulate.json` | simulate | estimate, horizon ladder, admissibility |
//! | `exponents.csv` | simulate | `trajectory,exponent,impulses` |
//! | `report_*.csv` | report | plot data, see [`cmd_report`] |
//! | `manifest.json` | every command | per command: model hash, options, outputs |
//!
//! CSV files contain no timestamps; rerunning a command on the same inputs
//! rewrites them byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bellman::{
    bellman_residual, check_solvable, lambda_full, residual_horizon, solve_normalized, BellmanOptions,
    BellmanSolution, LadderEntry, RefinementGap,
};
use crate::eigensolver::{check_fixed_point, dyadic_step, solve_one_step};
use crate::error::{Error, Result};
use crate::model::{load_model, ModelSpec};
use crate::operators::apply_m;
use crate::policy::{chained_jump_check, oracle_lambda, Action, ChainCollapseReport, Policy};
use crate::propagator::weighted_kernel;
use crate::simulator::{admissibility_from_run, exact_log_moment, run_simulation, AdmissibilityStats, JEstimate, SimConfig};
use crate::stopping::{martingale_check, MartingaleReport, CONTINUATION_TOL};

pub const SCHEMA_VERSION: u32 = 1;

/// Longest stopping iteration attempted for the two-route residual.
const MAX_RESIDUAL_STEPS: usize = 20_000_000;

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Solved, but `λ` does not exceed `r(f)` by the margin.
    Degenerate,
    /// Oracle and eigen route disagree beyond the tolerance.
    OracleMismatch,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Degenerate => 2,
            Outcome::OracleMismatch => 3,
        }
    }
}

/// Exit code for a failed command.
pub const ERROR_EXIT: i32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    pub options: BellmanOptions,
    pub out: PathBuf,
}

/// One `manifest.json` per run directory, with the latest record of each
/// command that wrote into it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub runs: BTreeMap<String, CommandRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandRecord {
    pub model_path: PathBuf,
    pub model_sha256: String,
    pub options: BellmanOptions,
    pub grid_levels: Vec<u32>,
    /// Extra command parameters, e.g. the simulation config.
    pub parameters: serde_json::Value,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub outputs: Vec<PathBuf>,
}

/// Everything `solve` learns, in the raw running-cost scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionArtifact {
    pub schema_version: u32,
    pub states: Vec<String>,
    pub lambda: f64,
    pub r_f: f64,
    /// Constant removed from the running cost before solving.
    pub offset: f64,
    pub degenerate: bool,
    pub degeneracy_margin: f64,
    pub k: u32,
    pub delta: f64,
    pub w: Vec<f64>,
    pub mw: Vec<f64>,
    pub ladder: Vec<LadderEntry>,
    pub lambda_by_k: Vec<(u32, f64)>,
    pub convergence: Vec<RefinementGap>,
    pub fixed_point_residual: f64,
    pub martingale: MartingaleReport,
    /// Two-route gap; absent for degenerate runs or when the stopping
    /// iteration would be too long.
    pub bellman_residual: Option<f64>,
    pub policy: Option<String>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn read_model(path: &Path) -> Result<(ModelSpec, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let hash = Sha256::digest(text.as_bytes());
    let hex = hash.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    Ok((load_model(&text)?, hex))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn out_line(stdout: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(stdout, "{line}").map_err(|e| Error::io("<stdout>", e))
}

struct ManifestDraft<'a> {
    command: &'a str,
    model_path: &'a Path,
    model_hash: String,
    options: BellmanOptions,
    grid_levels: Vec<u32>,
    parameters: serde_json::Value,
    started_at: f64,
}

impl ManifestDraft<'_> {
    fn finish(self, dir: &Path, outputs: Vec<PathBuf>) -> Result<()> {
        let path = dir.join("manifest.json");
        let mut manifest: RunManifest = if path.exists() {
            read_json(&path)?
        } else {
            RunManifest::default()
        };
        manifest.schema_version = SCHEMA_VERSION;
        manifest.artifact_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.runs.insert(
            self.command.to_string(),
            CommandRecord {
                model_path: self.model_path.to_path_buf(),
                model_sha256: self.model_hash,
                options: self.options,
                grid_levels: self.grid_levels,
                parameters: self.parameters,
                started_at: self.started_at,
                finished_at: now(),
                outputs,
            },
        );
        write_json(&path, &manifest)
    }
}

fn raw_solve(spec: &ModelSpec, options: &BellmanOptions) -> Result<(BellmanSolution, f64)> {
    if spec.running_cost.iter().any(|&f| f > 0.0) {
        let s = solve_normalized(spec, options)?;
        Ok((s.solution, s.offset))
    } else {
        Ok((lambda_full(spec, options)?, 0.0))
    }
}

/// Solves the model and writes `solution.json`, `ladder.csv`, `policy.csv`
/// and the manifest.
pub fn cmd_solve(model_path: &Path, flags: &RunFlags, dump_kernels: bool, stdout: &mut dyn Write) -> Result<Outcome> {
    let started_at = now();
    let (spec, hash) = read_model(model_path)?;
    let (sol, offset) = raw_solve(&spec, &flags.options)?;
    let solved_spec = if offset != 0.0 {
        spec.with_running_cost(spec.running_cost.iter().map(|f| f - offset).collect())
    } else {
        spec.clone()
    };

    let (mw, _) = apply_m(&spec, &sol.w);
    let finest = sol.finest();
    let fixed_point_residual = check_fixed_point(&solved_spec, finest)?.max_residual;
    let martingale = martingale_check(&solved_spec, finest)?;
    let bellman = match residual_horizon(&solved_spec, &sol, 1e-13)? {
        Some(steps) if steps <= MAX_RESIDUAL_STEPS => Some(bellman_residual(&solved_spec, &sol, steps)?),
        _ => None,
    };
    let policy = (!sol.degenerate).then(|| Policy::from_values(&spec, &sol.w, CONTINUATION_TOL, None));

    let artifact = SolutionArtifact {
        schema_version: SCHEMA_VERSION,
        states: spec.states.clone(),
        lambda: sol.lambda + offset,
        r_f: sol.r_f + offset,
        offset,
        degenerate: sol.degenerate,
        degeneracy_margin: sol.degeneracy_margin,
        k: sol.k,
        delta: sol.delta(),
        w: sol.w.clone(),
        mw: mw.clone(),
        ladder: sol
            .ladder
            .iter()
            .map(|e| LadderEntry {
                lambda: e.lambda + offset,
                ..e.clone()
            })
            .collect(),
        lambda_by_k: sol.lambda_by_k.iter().map(|&(k, l)| (k, l + offset)).collect(),
        convergence: sol.convergence.clone(),
        fixed_point_residual,
        martingale,
        bellman_residual: bellman,
        policy: policy.as_ref().map(Policy::encode),
    };

    let dir = &flags.out;
    ensure_dir(dir)?;
    let mut outputs = Vec::new();

    let path = dir.join("solution.json");
    write_json(&path, &artifact)?;
    outputs.push(path);

    let mut csv = String::from("m,k,lambda,residual,iterations\n");
    for e in &artifact.ladder {
        let _ = writeln!(csv, "{},{},{},{},{}", e.m, e.k, e.lambda, e.residual, e.iterations);
    }
    let path = dir.join("ladder.csv");
    write_file(&path, &csv)?;
    outputs.push(path);

    let policy_path = dir.join("policy.csv");
    if let Some(p) = &policy {
        write_file(&policy_path, &policy_csv(&spec, p, &sol.w, &mw))?;
        outputs.push(policy_path);
    } else if policy_path.exists() {
        // a stale strategy from an earlier nondegenerate solve would mislead
        fs::remove_file(&policy_path).map_err(|e| Error::io(&policy_path, e))?;
    }

    if dump_kernels {
        for &k in &spec.grid_levels {
            let kernel = weighted_kernel(&spec, dyadic_step(k), 0.0)?;
            let mut csv = String::from("from");
            for s in &spec.states {
                let _ = write!(csv, ",{s}");
            }
            csv.push('\n');
            for (x, label) in spec.states.iter().enumerate() {
                csv.push_str(label);
                for v in kernel.matrix.row(x) {
                    let _ = write!(csv, ",{v}");
                }
                csv.push('\n');
            }
            let path = dir.join(format!("kernel_k{k}.csv"));
            write_file(&path, &csv)?;
            outputs.push(path);
        }
    }

    ManifestDraft {
        command: "solve",
        model_path,
        model_hash: hash,
        options: flags.options,
        grid_levels: spec.grid_levels.clone(),
        parameters: serde_json::json!({ "dump_kernels": dump_kernels }),
        started_at,
    }
    .finish(dir, outputs)?;

    out_line(stdout, format_args!("lambda = {}", artifact.lambda))?;
    out_line(stdout, format_args!("r(f) = {}", artifact.r_f))?;
    if offset != 0.0 {
        out_line(stdout, format_args!("running cost offset = {offset}"))?;
    }
    out_line(stdout, format_args!("degenerate = {}", artifact.degenerate))?;
    if let Some(p) = &artifact.policy {
        out_line(stdout, format_args!("policy = {p}"))?;
    }
    Ok(if sol.degenerate { Outcome::Degenerate } else { Outcome::Success })
}

fn action_fields(spec: &ModelSpec, a: Action) -> (&'static str, String) {
    match a {
        Action::Continue => ("continue", String::new()),
        Action::Jump(xi) => ("jump", spec.states[xi].clone()),
    }
}

fn policy_csv(spec: &ModelSpec, policy: &Policy, w: &[f64], mw: &[f64]) -> String {
    let mut csv = String::from("state,label,action,target,w,mw\n");
    for (x, &a) in policy.actions.iter().enumerate() {
        let (action, target) = action_fields(spec, a);
        let _ = writeln!(csv, "{x},{},{action},{target},{},{}", spec.states[x], w[x], mw[x]);
    }
    csv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFlags {
    pub k: Option<u32>,
    pub level: Option<usize>,
    pub cap: u64,
    /// Largest accepted `|oracle - eigen|`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleArtifact {
    pub k: u32,
    pub level: Option<usize>,
    pub policies: usize,
    pub best_value: f64,
    pub best_policy: String,
    pub eigen_lambda: f64,
    pub difference: f64,
    /// `λ` from an earlier `solve` in the same directory, when comparable.
    pub solve_lambda: Option<f64>,
    pub solve_difference: Option<f64>,
    pub chained_jumps: ChainCollapseReport,
    pub tolerance: f64,
    pub matches: bool,
}

/// Enumerates stationary policies at one `(m, k)` and compares the best
/// growth with the eigen route.
pub fn cmd_oracle(model_path: &Path, flags: &RunFlags, oracle: &OracleFlags, stdout: &mut dyn Write) -> Result<Outcome> {
    let started_at = now();
    let (spec, hash) = read_model(model_path)?;
    check_solvable(&spec)?;
    let k = oracle.k.unwrap_or_else(|| *spec.grid_levels.last().expect("validated grid"));
    let m = oracle.level.unwrap_or(spec.max_level());
    let result = oracle_lambda(&spec, k, oracle.level, oracle.cap)?;
    let eigen = solve_one_step(&spec, m, k, &flags.options.solver).map_err(|e| e.at_level(m, k))?;
    let chained = chained_jump_check(&spec, &result)?;

    let dir = &flags.out;
    let solution_path = dir.join("solution.json");
    let solve_lambda = if m == spec.max_level() && solution_path.exists() {
        let sol: SolutionArtifact = read_json(&solution_path)?;
        (sol.k == k).then_some(sol.lambda)
    } else {
        None
    };
    let difference = result.best_value - eigen.lambda;
    let solve_difference = solve_lambda.map(|l| result.best_value - l);
    let matches = difference.abs() <= oracle.tolerance && solve_difference.is_none_or(|d| d.abs() <= oracle.tolerance);
    let artifact = OracleArtifact {
        k,
        level: oracle.level,
        policies: result.table.len(),
        best_value: result.best_value,
        best_policy: result.best_policy.encode(),
        eigen_lambda: eigen.lambda,
        difference,
        solve_lambda,
        solve_difference,
        chained_jumps: chained,
        tolerance: oracle.tolerance,
        matches,
    };

    ensure_dir(dir)?;
    let mut csv = String::from("policy,value,per_state\n");
    for row in &result.table {
        let reducible = row.per_state.iter().any(|v| *v != row.value);
        let per_state = if reducible {
            row.per_state.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
        } else {
            String::new()
        };
        let _ = writeln!(csv, "{},{},{per_state}", row.policy.encode(), row.value);
    }
    let csv_path = dir.join("oracle.csv");
    write_file(&csv_path, &csv)?;
    let json_path = dir.join("oracle.json");
    write_json(&json_path, &artifact)?;
    ManifestDraft {
        command: "oracle",
        model_path,
        model_hash: hash,
        options: flags.options,
        grid_levels: spec.grid_levels.clone(),
        parameters: serde_json::to_value(oracle).unwrap_or_default(),
        started_at,
    }
    .finish(dir, vec![csv_path, json_path])?;

    out_line(stdout, format_args!("policies = {}", artifact.policies))?;
    out_line(stdout, format_args!("oracle best = {} ({})", artifact.best_value, artifact.best_policy))?;
    out_line(stdout, format_args!("eigen lambda(m = {m}, k = {k}) = {}", artifact.eigen_lambda))?;
    out_line(stdout, format_args!("difference = {:e}", artifact.difference))?;
    if let (Some(l), Some(d)) = (solve_lambda, solve_difference) {
        out_line(stdout, format_args!("solve lambda = {l}, difference = {d:e}"))?;
    }
    Ok(if matches { Outcome::Success } else { Outcome::OracleMismatch })
}

/// Which policy `simulate` runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyChoice {
    /// The strategy stored by a previous `solve` in the run directory.
    Optimal,
    Never,
    /// Space-separated tokens, `C` or `J<target index>`, one per state.
    Explicit(String),
}

impl std::str::FromStr for PolicyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "optimal" => PolicyChoice::Optimal,
            "never" => PolicyChoice::Never,
            other => PolicyChoice::Explicit(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateFlags {
    pub policy: PolicyChoice,
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub start: Option<String>,
    pub grid_k: Option<u32>,
    pub decide_at_zero: bool,
    pub jump_time_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub policy: String,
    pub config: SimConfig,
    pub estimate: JEstimate,
    /// `(T, point, stderr)`
    pub ladder: Vec<(f64, f64, f64)>,
    pub exact_finite_horizon: Option<f64>,
    pub admissibility: AdmissibilityStats,
    pub solve_lambda: Option<f64>,
}

/// Monte Carlo estimate for a policy; writes `simulate.json` and
/// `exponents.csv`.
pub fn cmd_simulate(model_path: &Path, flags: &RunFlags, sim: &SimulateFlags, stdout: &mut dyn Write) -> Result<Outcome> {
    let started_at = now();
    let (spec, hash) = read_model(model_path)?;
    check_solvable(&spec)?;
    let dir = &flags.out;
    let solution_path = dir.join("solution.json");
    let solution: Option<SolutionArtifact> = if solution_path.exists() {
        Some(read_json(&solution_path)?)
    } else {
        None
    };
    let policy = match &sim.policy {
        PolicyChoice::Optimal => {
            let sol = solution
                .as_ref()
                .ok_or_else(|| Error::Argument(format!("no solution in {}: run solve first", dir.display())))?;
            if sol.states != spec.states || sol.w.len() != spec.n() {
                return Err(Error::Artifact {
                    path: solution_path,
                    message: "solution does not belong to this model".into(),
                });
            }
            if sol.degenerate {
                return Err(Error::Degenerate {
                    lambda: sol.lambda,
                    r_f: sol.r_f,
                    margin: sol.degeneracy_margin,
                });
            }
            Policy::from_values(&spec, &sol.w, CONTINUATION_TOL, None)
        }
        PolicyChoice::Never => Policy::never_impulse(spec.n()),
        PolicyChoice::Explicit(text) => Policy::decode(text, spec.n())?,
    };
    let start = match &sim.start {
        None => spec.impulse_set[0],
        Some(label) => spec
            .index_of(label)
            .or_else(|| label.parse().ok().filter(|&i: &usize| i < spec.n()))
            .ok_or_else(|| Error::UnknownState {
                field: "start".into(),
                label: label.clone(),
            })?,
    };
    let grid_k = sim
        .grid_k
        .or(solution.as_ref().map(|s| s.k))
        .unwrap_or_else(|| *spec.grid_levels.last().expect("validated grid"));
    let mut config = SimConfig::new(sim.horizon, sim.trajectories, sim.seed, start, grid_k);
    config.decide_at_zero = sim.decide_at_zero;
    config.jump_time_mode = sim.jump_time_mode;

    let run = run_simulation(&spec, &policy, &config)?;
    let exact = if config.jump_time_mode {
        None
    } else {
        Some(exact_log_moment(&spec, &policy, &config)?)
    };
    let artifact = SimulationArtifact {
        policy: policy.encode(),
        admissibility: admissibility_from_run(&config, &run),
        config,
        estimate: run.estimate.clone(),
        ladder: run.ladder.clone(),
        exact_finite_horizon: exact,
        solve_lambda: solution.as_ref().map(|s| s.lambda),
    };

    ensure_dir(dir)?;
    let json_path = dir.join("simulate.json");
    write_json(&json_path, &artifact)?;
    let mut csv = String::from("trajectory,exponent,impulses\n");
    for (i, (z, n)) in run.exponents.iter().zip(&run.impulse_counts).enumerate() {
        let _ = writeln!(csv, "{i},{z},{n}");
    }
    let csv_path = dir.join("exponents.csv");
    write_file(&csv_path, &csv)?;
    ManifestDraft {
        command: "simulate",
        model_path,
        model_hash: hash,
        options: flags.options,
        grid_levels: spec.grid_levels.clone(),
        parameters: serde_json::to_value(sim).unwrap_or_default(),
        started_at,
    }
    .finish(dir, vec![json_path, csv_path])?;

    let e = &artifact.estimate;
    out_line(stdout, format_args!("policy = {}", artifact.policy))?;
    out_line(stdout, format_args!("J = {} (stderr {})", e.point, e.stderr))?;
    if let Some(x) = exact {
        out_line(stdout, format_args!("exact finite-horizon value = {x}"))?;
    }
    if let Some(l) = artifact.solve_lambda {
        out_line(stdout, format_args!("solve lambda = {l}"))?;
    }
    out_line(
        stdout,
        format_args!(
            "impulses per unit time = {} (max burst {})",
            e.impulse_rate.mean, e.max_burst
        ),
    )?;
    Ok(Outcome::Success)
}

/// Plot data from a run directory:
///
/// * `report_lambda_ladder.csv`: `m,k,delta,lambda`
/// * `report_j_ladder.csv`: `horizon,point,stderr,lambda`
/// * `report_w_profile.csv`: `state,label,w,mw,action`
/// * `report_convergence.csv`: `k,k_next,lambda_gap,mw_gap,w_gap`
///
/// `solution.json` is required; without `simulate.json` the J ladder has a
/// header only.
pub fn cmd_report(run_dir: &Path, stdout: &mut dyn Write) -> Result<Outcome> {
    let solution_path = run_dir.join("solution.json");
    if !solution_path.exists() {
        return Err(Error::Artifact {
            path: solution_path,
            message: "missing; run solve first".into(),
        });
    }
    let sol: SolutionArtifact = read_json(&solution_path)?;
    let sim_path = run_dir.join("simulate.json");
    let sim: Option<SimulationArtifact> = if sim_path.exists() {
        Some(read_json(&sim_path)?)
    } else {
        None
    };
    let policy = sol
        .policy
        .as_deref()
        .map(|p| Policy::decode(p, sol.states.len()))
        .transpose()?;

    let mut files = Vec::new();
    let mut ladder = String::from("m,k,delta,lambda\n");
    for e in &sol.ladder {
        let _ = writeln!(ladder, "{},{},{},{}", e.m, e.k, dyadic_step(e.k), e.lambda);
    }
    files.push(("report_lambda_ladder.csv", ladder));

    let mut j = String::from("horizon,point,stderr,lambda\n");
    if let Some(sim) = &sim {
        for (t, p, se) in &sim.ladder {
            let _ = writeln!(j, "{t},{p},{se},{}", sol.lambda);
        }
    }
    files.push(("report_j_ladder.csv", j));

    let mut profile = String::from("state,label,w,mw,action\n");
    for (x, label) in sol.states.iter().enumerate() {
        let action = match policy.as_ref().map(|p| p.actions[x]) {
            None => String::new(),
            Some(Action::Continue) => "continue".into(),
            Some(Action::Jump(xi)) => format!("jump:{}", sol.states[xi]),
        };
        let _ = writeln!(profile, "{x},{label},{},{},{action}", sol.w[x], sol.mw[x]);
    }
    files.push(("report_w_profile.csv", profile));

    let mut conv = String::from("k,k_next,lambda_gap,mw_gap,w_gap\n");
    for g in &sol.convergence {
        let _ = writeln!(conv, "{},{},{},{},{}", g.k, g.k_next, g.lambda_gap, g.mw_gap, g.w_gap);
    }
    files.push(("report_convergence.csv", conv));

    for (name, content) in &files {
        let path = run_dir.join(name);
        write_file(&path, content)?;
        out_line(stdout, format_args!("wrote {}", path.display()))?;
    }
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{m1, m2};

    fn run(model: &ModelSpec) -> (tempfile::TempDir, PathBuf, RunFlags) {
        let dir = tempfile::tempdir().unwrap();
        let model_path = dir.path().join("model.toml");
        fs::write(&model_path, model.to_toml()).unwrap();
        let flags = RunFlags {
            options: BellmanOptions::default(),
            out: dir.path().join("run"),
        };
        (dir, model_path, flags)
    }

    #[test]
    fn solve_exit_codes() {
        let (_d, path, flags) = run(&m1());
        let mut out = Vec::new();
        assert_eq!(cmd_solve(&path, &flags, false, &mut out).unwrap(), Outcome::Degenerate);
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("lambda = -0.5"), "{text}");
        assert!(!flags.out.join("policy.csv").exists());

        let (_d, path, flags) = run(&m2());
        assert_eq!(cmd_solve(&path, &flags, true, &mut Vec::new()).unwrap(), Outcome::Success);
        let policy = fs::read_to_string(flags.out.join("policy.csv")).unwrap();
        assert!(policy.contains("1,s1,jump,s0,"));
        assert!(flags.out.join("kernel_k2.csv").exists());
        let sim = SimulateFlags {
            policy: PolicyChoice::Never,
            horizon: 2.0,
            trajectories: 4,
            seed: 1,
            start: None,
            grid_k: None,
            decide_at_zero: true,
            jump_time_mode: false,
        };
        cmd_simulate(&path, &flags, &sim, &mut Vec::new()).unwrap();
        let manifest: RunManifest = read_json(&flags.out.join("manifest.json")).unwrap();
        assert_eq!(manifest.runs.keys().collect::<Vec<_>>(), ["simulate", "solve"]);
        let text = fs::read_to_string(&path).unwrap();
        let digest = Sha256::digest(text.as_bytes());
        assert_eq!(manifest.runs["solve"].model_sha256.len(), 64);
        assert!(manifest.runs["solve"].model_sha256.starts_with(&format!("{:02x}", digest[0])));
    }

    #[test]
    fn report_needs_a_solution() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_report(dir.path(), &mut Vec::new()).is_err());
    }

    #[test]
    fn simulate_optimal_needs_solve() {
        let (_d, path, flags) = run(&m2());
        let sim = SimulateFlags {
            policy: PolicyChoice::Optimal,
            horizon: 5.0,
            trajectories: 10,
            seed: 1,
            start: None,
            grid_k: None,
            decide_at_zero: true,
            jump_time_mode: false,
        };
        let err = cmd_simulate(&path, &flags, &sim, &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("run solve first"));
        cmd_solve(&path, &flags, false, &mut Vec::new()).unwrap();
        assert_eq!(cmd_simulate(&path, &flags, &sim, &mut Vec::new()).unwrap(), Outcome::Success);
    }

    #[test]
    fn policy_choice_parsing() {
        assert_eq!("optimal".parse::<PolicyChoice>().unwrap(), PolicyChoice::Optimal);
        assert_eq!("never".parse::<PolicyChoice>().unwrap(), PolicyChoice::Never);
        assert_eq!("C J0".parse::<PolicyChoice>().unwrap(), PolicyChoice::Explicit("C J0".into()));
    }
}
