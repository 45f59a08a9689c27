//! Full-problem assembly: the ladder over exhaustion levels `m` and dyadic
//! exponents `k`, the constant `λ` at the finest configured level, the
//! degeneracy test against `r(f)`, and the stopping-route cross-check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::{solve_one_step, EigenSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::sup_norm_diff;
use crate::model::{normalize_running_cost, validate_model, Invariant, ModelSpec};
use crate::operators::{apply_m, DomainMask};
use crate::propagator::{semigroup_type, tail_supremum_bound};
use crate::stopping::{finite_horizon_value, StoppingProblem};

/// Slack allowed when asserting monotone ladders.
pub const LADDER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellmanOptions {
    pub solver: SolverOptions,
    /// `λ - r(f)` below this counts as degenerate.
    pub degeneracy_margin: f64,
}

impl Default for BellmanOptions {
    fn default() -> Self {
        BellmanOptions {
            solver: SolverOptions::default(),
            degeneracy_margin: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub m: usize,
    pub k: u32,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Differences between consecutive dyadic levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementGap {
    pub k: u32,
    pub k_next: u32,
    /// `λ_{δ_{k'}} - λ_{δ_k}`
    pub lambda_gap: f64,
    /// `‖M w_{δ_k} - M w_{δ_{k'}}‖_∞`
    pub mw_gap: f64,
    /// `‖w_{δ_k} - w_{δ_{k'}}‖_∞`
    pub w_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellmanSolution {
    /// `λ` at the finest configured grid level.
    pub lambda: f64,
    pub r_f: f64,
    pub degenerate: bool,
    pub degeneracy_margin: f64,
    /// Finest dyadic exponent; `w` and `λ` live on the grid `2^{-k}`.
    pub k: u32,
    pub w: Vec<f64>,
    /// Every `(m, k)` solve in level order.
    pub ladder: Vec<LadderEntry>,
    /// `(k, λ_{δ_k})` in increasing `k`.
    pub lambda_by_k: Vec<(u32, f64)>,
    pub convergence: Vec<RefinementGap>,
    /// The full-domain (`m = M`) solution for every `k`.
    pub full_domain: Vec<EigenSolution>,
}

impl BellmanSolution {
    pub fn finest(&self) -> &EigenSolution {
        self.full_domain.last().expect("at least one grid level")
    }

    pub fn delta(&self) -> f64 {
        self.finest().delta
    }
}

/// Validation for the solve pipeline. The running-cost sign is exempt:
/// shifting `f` by a constant shifts `λ` by the same constant.
pub(crate) fn check_solvable(spec: &ModelSpec) -> Result<()> {
    let report: Vec<_> = validate_model(spec)
        .into_iter()
        .filter(|v| v.invariant != Invariant::RunningCostSign)
        .collect();
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(report))
    }
}

/// Solves every exhaustion level at `δ = 2^{-k}`. Returns `λ^M_δ`, which is
/// `λ_δ` on a finite state set, and the per-level solutions.
pub fn lambda_delta(spec: &ModelSpec, k: u32, opts: &SolverOptions) -> Result<(f64, Vec<EigenSolution>)> {
    let per_m: Vec<EigenSolution> = (0..=spec.max_level())
        .into_par_iter()
        .map(|m| solve_one_step(spec, m, k, opts).map_err(|e| e.at_level(m, k)))
        .collect::<Result<_>>()?;
    check_monotone_in_m(k, &per_m)?;
    Ok((per_m.last().expect("nonempty chain").lambda, per_m))
}

fn check_monotone_in_m(k: u32, per_m: &[EigenSolution]) -> Result<()> {
    for (m, pair) in per_m.windows(2).enumerate() {
        if pair[0].lambda > pair[1].lambda + LADDER_TOL {
            return Err(Error::LadderNotMonotone {
                k,
                m,
                next: m + 1,
                lower: pair[0].lambda,
                upper: pair[1].lambda,
            });
        }
    }
    Ok(())
}

/// Runs the whole `(m, k)` ladder and assembles `(λ, w)`.
pub fn lambda_full(spec: &ModelSpec, opts: &BellmanOptions) -> Result<BellmanSolution> {
    check_solvable(spec)?;
    if spec.grid_levels.is_empty() {
        return Err(Error::Argument("no grid levels configured".into()));
    }
    let jobs: Vec<(usize, u32)> = spec
        .grid_levels
        .iter()
        .flat_map(|&k| (0..=spec.max_level()).map(move |m| (m, k)))
        .collect();
    let solved: Vec<EigenSolution> = jobs
        .par_iter()
        .map(|&(m, k)| solve_one_step(spec, m, k, &opts.solver).map_err(|e| e.at_level(m, k)))
        .collect::<Result<_>>()?;

    let levels = spec.max_level() + 1;
    let mut full_domain = Vec::with_capacity(spec.grid_levels.len());
    for (i, &k) in spec.grid_levels.iter().enumerate() {
        let per_m = &solved[i * levels..(i + 1) * levels];
        check_monotone_in_m(k, per_m)?;
        full_domain.push(per_m[levels - 1].clone());
    }
    let ladder = solved
        .iter()
        .map(|s| LadderEntry {
            m: s.m,
            k: s.k,
            lambda: s.lambda,
            residual: s.residual,
            iterations: s.iterations,
        })
        .collect();

    let r_f = semigroup_type(spec)?;
    let finest = full_domain.last().expect("nonempty grid");
    let lambda = finest.lambda;
    let mut w = finest.w.clone();
    let top = spec
        .impulse_set
        .iter()
        .map(|&u| w[u])
        .fold(f64::NEG_INFINITY, f64::max);
    for v in &mut w {
        *v -= top;
    }
    Ok(BellmanSolution {
        lambda,
        r_f,
        degenerate: lambda - r_f < opts.degeneracy_margin,
        degeneracy_margin: opts.degeneracy_margin,
        k: finest.k,
        w,
        ladder,
        lambda_by_k: full_domain.iter().map(|s| (s.k, s.lambda)).collect(),
        convergence: dyadic_refinement_diagnostics(spec, &full_domain),
        full_domain,
    })
}

/// Gaps between consecutive entries of a per-`k` list of full-domain solutions.
pub fn dyadic_refinement_diagnostics(spec: &ModelSpec, solutions: &[EigenSolution]) -> Vec<RefinementGap> {
    solutions
        .windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let (mwa, _) = apply_m(spec, &a.w);
            let (mwb, _) = apply_m(spec, &b.w);
            RefinementGap {
                k: a.k,
                k_next: b.k,
                lambda_gap: b.lambda - a.lambda,
                mw_gap: sup_norm_diff(&mwa, &mwb),
                w_gap: sup_norm_diff(&a.w, &b.w),
            }
        })
        .collect()
}

/// Grid steps after which the stopping iteration for `solution` is within
/// `target` of its limit, from the resolvent tail bound. `None` for
/// degenerate solutions, whose stopping problem has no contraction.
pub fn residual_horizon(spec: &ModelSpec, solution: &BellmanSolution, target: f64) -> Result<Option<usize>> {
    let type_bound = solution.r_f - solution.lambda;
    if !(type_bound < 0.0) {
        return Ok(None);
    }
    let a = type_bound / 2.0;
    let g: Vec<f64> = spec.running_cost.iter().map(|f| f - solution.lambda).collect();
    let at_zero = tail_supremum_bound(spec, &g, a, 0.0)?;
    // e^{aT} at_zero <= target
    let horizon = ((target / at_zero).ln() / a).max(0.0);
    Ok(Some((horizon / solution.delta()).ceil() as usize + 1))
}

/// Re-derives `w` through the stopping problem with running term `f - λ`
/// and terminal payoff `M w` on the finest grid, and returns the sup-norm
/// gap to the eigen-route `w`.
pub fn bellman_residual(spec: &ModelSpec, solution: &BellmanSolution, horizon_steps: usize) -> Result<f64> {
    if solution.degenerate {
        return Err(Error::Degenerate {
            lambda: solution.lambda,
            r_f: solution.r_f,
            margin: solution.degeneracy_margin,
        });
    }
    let u = stopping_route(spec, solution, horizon_steps)?;
    Ok(sup_norm_diff(&u, &solution.w))
}

/// The stopping-route value `u_T` itself.
pub fn stopping_route(spec: &ModelSpec, solution: &BellmanSolution, horizon_steps: usize) -> Result<Vec<f64>> {
    let (mw, _) = apply_m(spec, &solution.w);
    let g: Vec<f64> = spec.running_cost.iter().map(|f| f - solution.lambda).collect();
    let problem = StoppingProblem::new(spec, g, mw, DomainMask::full(spec.n()), solution.delta())?;
    Ok(finite_horizon_value(&problem, horizon_steps))
}

/// A solve of a model whose running cost may take positive values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSolve {
    /// Solution of the model with `f = f̃ - ‖f̃‖`.
    pub solution: BellmanSolution,
    pub offset: f64,
    /// `λ` for the raw running cost: `solution.lambda + offset`.
    pub lambda_raw: f64,
}

/// Normalizes the running cost, solves, and reports `λ` on both scales.
pub fn solve_normalized(spec: &ModelSpec, opts: &BellmanOptions) -> Result<NormalizedSolve> {
    let (f, offset) = normalize_running_cost(&spec.running_cost)?;
    let solution = lambda_full(&spec.with_running_cost(f), opts)?;
    Ok(NormalizedSolve {
        lambda_raw: solution.lambda + offset,
        offset,
        solution,
    })
}
