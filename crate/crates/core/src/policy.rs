//! Stationary grid policies: extraction from a solution, exact long-run
//! growth through Perron roots, and the exhaustive enumeration oracle.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::BellmanSolution;
use crate::eigensolver::{dyadic_step, EigenSolution};
use crate::error::{Error, Result};
use crate::linalg::{perron_root_by_start, Matrix};
use crate::model::ModelSpec;
use crate::operators::apply_m;
use crate::propagator::weighted_kernel;

/// Default bound on the number of enumerated policies.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Relative tolerance for Perron roots of policy matrices.
const POLICY_PERRON_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Continue,
    /// Shift to the given state, which lies in the impulse set.
    Jump(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<Action>,
    /// When set, every state outside `B_m` must jump.
    pub level: Option<usize>,
}

impl Policy {
    pub fn never_impulse(n: usize) -> Self {
        Policy {
            actions: vec![Action::Continue; n],
            level: None,
        }
    }

    pub fn always_jump(n: usize, target: usize) -> Self {
        Policy {
            actions: vec![Action::Jump(target); n],
            level: None,
        }
    }

    /// Thresholds `w` against `M w`: jump to the `M`-argmax wherever
    /// `w ≤ M w + tol`, and everywhere outside `B_level`.
    pub fn from_values(spec: &ModelSpec, w: &[f64], tol: f64, level: Option<usize>) -> Self {
        let (mw, arg) = apply_m(spec, w);
        let mask = level.map(|m| spec.mask(m));
        let actions = (0..spec.n())
            .map(|x| {
                let forced = mask.as_ref().is_some_and(|mk| !mk.contains(x));
                if forced || w[x] <= mw[x] + tol {
                    Action::Jump(spec.impulse_set[arg[x]])
                } else {
                    Action::Continue
                }
            })
            .collect();
        Policy { actions, level }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.actions.len() != spec.n() {
            return Err(Error::Dimension {
                field: "policy".into(),
                expected: spec.n().to_string(),
                found: self.actions.len().to_string(),
            });
        }
        if let Some(m) = self.level {
            if m > spec.max_level() {
                return Err(Error::Argument(format!(
                    "policy level {m} exceeds the last exhaustion level {}",
                    spec.max_level()
                )));
            }
        }
        let mask = self.level.map(|m| spec.mask(m));
        for (x, a) in self.actions.iter().enumerate() {
            match a {
                Action::Jump(xi) if spec.impulse_position(*xi).is_none() => {
                    return Err(Error::Argument(format!(
                        "policy jumps from {} to {xi}, which is not an impulse target",
                        spec.states[x]
                    )))
                }
                Action::Continue if mask.as_ref().is_some_and(|mk| !mk.contains(x)) => {
                    return Err(Error::Argument(format!(
                        "policy continues at {} outside level {}",
                        spec.states[x],
                        self.level.unwrap_or_default()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Compact text form: one token per state, `C` or `J<target index>`,
    /// separated by spaces.
    pub fn encode(&self) -> String {
        self.to_string()
    }

    pub fn decode(text: &str, n: usize) -> Result<Self> {
        let actions = text
            .split_whitespace()
            .map(|tok| match tok {
                "C" => Ok(Action::Continue),
                t if t.starts_with('J') => t[1..]
                    .parse()
                    .map(Action::Jump)
                    .map_err(|_| Error::Argument(format!("bad policy token {t:?}"))),
                t => Err(Error::Argument(format!("bad policy token {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if actions.len() != n {
            return Err(Error::Dimension {
                field: "policy".into(),
                expected: n.to_string(),
                found: actions.len().to_string(),
            });
        }
        Ok(Policy { actions, level: None })
    }

    pub fn jumps(&self) -> usize {
        self.actions.iter().filter(|a| matches!(a, Action::Jump(_))).count()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match a {
                Action::Continue => f.write_str("C")?,
                Action::Jump(xi) => write!(f, "J{xi}")?,
            }
        }
        Ok(())
    }
}

/// The strategy attached to a full solution. Degenerate solutions carry no
/// strategy.
pub fn strategy_from_solution(spec: &ModelSpec, solution: &BellmanSolution, tol: f64) -> Result<Policy> {
    if solution.degenerate {
        return Err(Error::Degenerate {
            lambda: solution.lambda,
            r_f: solution.r_f,
            margin: solution.degeneracy_margin,
        });
    }
    Ok(Policy::from_values(spec, &solution.w, tol, None))
}

/// The stationary strategy of a single `(m, k)` eigen solve, with forced
/// shifts outside `B_m`.
pub fn strategy_from_eigen(spec: &ModelSpec, solution: &EigenSolution, tol: f64) -> Policy {
    Policy::from_values(spec, &solution.w, tol, Some(solution.m))
}

fn policy_matrix(spec: &ModelSpec, kernel: &Matrix, policy: &Policy) -> Matrix {
    let n = spec.n();
    let mut a = Matrix::zeros(n, n);
    for (x, action) in policy.actions.iter().enumerate() {
        let (scale, src) = match *action {
            Action::Continue => (1.0, x),
            Action::Jump(xi) => (jump_weight(spec, x, xi), xi),
        };
        for (dst, k) in a.row_mut(x).iter_mut().zip(kernel.row(src)) {
            *dst = scale * k;
        }
    }
    a
}

fn jump_weight(spec: &ModelSpec, x: usize, xi: usize) -> f64 {
    let j = spec.impulse_position(xi).expect("validated jump target");
    spec.cost(x, j).exp()
}

/// One-step matrix of a stationary policy on the grid `2^{-k}`: row `x` is
/// `K(x, ·)` when continuing and `e^{c(x, ξ)} K(ξ, ·)` when jumping to `ξ`.
pub fn policy_one_step_matrix(spec: &ModelSpec, policy: &Policy, k: u32) -> Result<Matrix> {
    policy.validate(spec)?;
    let kernel = weighted_kernel(spec, dyadic_step(k), 0.0)?;
    Ok(policy_matrix(spec, &kernel.matrix, policy))
}

fn growth_from_matrix(a: &Matrix, delta: f64) -> Result<Vec<f64>> {
    Ok(perron_root_by_start(a, POLICY_PERRON_TOL)?
        .into_iter()
        .map(|rho| rho.ln() / delta)
        .collect())
}

/// Long-run growth `(1/δ) ln ρ` of the policy from every start state.
pub fn policy_growth_by_start(spec: &ModelSpec, policy: &Policy, k: u32) -> Result<Vec<f64>> {
    let a = policy_one_step_matrix(spec, policy, k)?;
    growth_from_matrix(&a, dyadic_step(k))
}

/// `(1/δ) ln ρ(A_π)`.
pub fn policy_growth_rate(spec: &ModelSpec, policy: &Policy, k: u32) -> Result<f64> {
    Ok(policy_growth_by_start(spec, policy, k)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub policy: Policy,
    pub value: f64,
    /// Growth from each start state; all equal when `A_π` is irreducible.
    pub per_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub k: u32,
    pub level: Option<usize>,
    pub best_value: f64,
    pub best_policy: Policy,
    /// Every policy in lexicographic action order.
    pub table: Vec<OracleRow>,
}

fn choices(spec: &ModelSpec, level: Option<usize>) -> Vec<Vec<Action>> {
    let mask = level.map(|m| spec.mask(m));
    let jumps: Vec<Action> = spec.impulse_set.iter().map(|&xi| Action::Jump(xi)).collect();
    (0..spec.n())
        .map(|x| {
            if mask.as_ref().is_some_and(|mk| !mk.contains(x)) {
                jumps.clone()
            } else {
                std::iter::once(Action::Continue).chain(jumps.iter().copied()).collect()
            }
        })
        .collect()
}

/// Number of stationary policies the oracle would enumerate.
pub fn policy_count(spec: &ModelSpec, level: Option<usize>) -> f64 {
    choices(spec, level).iter().map(|c| c.len() as f64).product()
}

fn nth_policy(choices: &[Vec<Action>], mut index: u64, level: Option<usize>) -> Policy {
    let mut actions = vec![Action::Continue; choices.len()];
    for (x, opts) in choices.iter().enumerate().rev() {
        let r = opts.len() as u64;
        actions[x] = opts[(index % r) as usize];
        index /= r;
    }
    Policy { actions, level }
}

/// Exhaustive search over stationary grid policies. With `level` set only
/// policies that shift on every exit from `B_level` are admitted.
pub fn oracle_lambda(spec: &ModelSpec, k: u32, level: Option<usize>, cap: u64) -> Result<OracleResult> {
    if let Some(m) = level {
        if m > spec.max_level() {
            return Err(Error::Argument(format!(
                "level {m} exceeds the last exhaustion level {}",
                spec.max_level()
            )));
        }
    }
    let count = policy_count(spec, level);
    if count > cap as f64 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let delta = dyadic_step(k);
    let kernel = weighted_kernel(spec, delta, 0.0)?;
    let choices = choices(spec, level);
    let table: Vec<OracleRow> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let policy = nth_policy(&choices, i, level);
            let per_state = growth_from_matrix(&policy_matrix(spec, &kernel.matrix, &policy), delta)?;
            let value = per_state.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(OracleRow {
                policy,
                value,
                per_state,
            })
        })
        .collect::<Result<_>>()?;
    let best_value = table.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let best_policy = table
        .iter()
        .find(|r| r.value == best_value)
        .expect("nonempty table")
        .policy
        .clone();
    Ok(OracleResult {
        k,
        level,
        best_value,
        best_policy,
        table,
    })
}

/// Outcome of comparing chained jumps `x → ξ → η` at one grid time against
/// the direct jump `x → η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainCollapseReport {
    /// Policies containing at least one chained pair.
    pub checked: usize,
    /// Largest `chained - collapsed` growth seen.
    pub max_gain_over_collapsed: f64,
    /// Largest `chained - best` growth seen.
    pub max_gain_over_best: f64,
}

/// For every policy in the table where some state jumps to a target that
/// itself jumps, builds the matrix where both shifts happen at the same
/// grid time and compares it with the collapsed single-shift policy.
pub fn chained_jump_check(spec: &ModelSpec, oracle: &OracleResult) -> Result<ChainCollapseReport> {
    let delta = dyadic_step(oracle.k);
    let kernel = weighted_kernel(spec, delta, 0.0)?;
    let results: Vec<Option<(f64, f64)>> = oracle
        .table
        .par_iter()
        .map(|row| {
            let acts = &row.policy.actions;
            let mut chained = policy_matrix(spec, &kernel.matrix, &row.policy);
            let mut collapsed = row.policy.clone();
            let mut any = false;
            for (x, a) in acts.iter().enumerate() {
                let Action::Jump(xi) = *a else { continue };
                let Action::Jump(eta) = acts[xi] else { continue };
                any = true;
                let scale = jump_weight(spec, x, xi) * jump_weight(spec, xi, eta);
                for (dst, k) in chained.row_mut(x).iter_mut().zip(kernel.matrix.row(eta)) {
                    *dst = scale * k;
                }
                collapsed.actions[x] = Action::Jump(eta);
            }
            if !any {
                return Ok(None);
            }
            let chained_value = growth_from_matrix(&chained, delta)?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            let collapsed_value = growth_from_matrix(&policy_matrix(spec, &kernel.matrix, &collapsed), delta)?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(Some((chained_value, collapsed_value)))
        })
        .collect::<Result<_>>()?;
    let mut report = ChainCollapseReport {
        checked: 0,
        max_gain_over_collapsed: f64::NEG_INFINITY,
        max_gain_over_best: f64::NEG_INFINITY,
    };
    for (chained, collapsed) in results.into_iter().flatten() {
        report.checked += 1;
        report.max_gain_over_collapsed = report.max_gain_over_collapsed.max(chained - collapsed);
        report.max_gain_over_best = report.max_gain_over_best.max(chained - oracle.best_value);
    }
    Ok(report)
}
