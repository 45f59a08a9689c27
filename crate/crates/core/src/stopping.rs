//! Multiplicative optimal stopping on the dyadic grid.
//!
//! For a running term `g` and terminal payoff `G ≤ 0`, the value
//! `u(x) = sup_τ ln E_x[exp(∫_0^{τ∧τ_B} g(X_s) ds + G(X_{τ∧τ_B}))]`
//! is the limit of the backward recursion
//!
//! ```text
//! u⁰ = G
//! e^{u^{n+1}(x)} = max(e^{G(x)}, Σ_y K(x, y) [y ∈ B ? e^{uⁿ(y)} : e^{G(y)}]),  x ∈ B
//! uⁿ(x) = G(x),  x ∉ B
//! ```
//!
//! with `K = exp(δ (Q + diag g))`. On a chain the continuation value is
//! constant between jumps, so the grid skeleton is all the final strategy
//! ever sees.

use serde::{Deserialize, Serialize};

use crate::eigensolver::EigenSolution;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operators::{apply_m, extend_outside, DomainMask};
use crate::propagator::{metzler_exp, tail_supremum_bound, weighted_kernel};
use crate::linalg::Matrix;

/// Relative tolerance on `w - M w` separating continuation from impulse states.
pub const CONTINUATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingProblem {
    pub g: Vec<f64>,
    pub terminal: Vec<f64>,
    pub mask: DomainMask,
    pub delta: f64,
    kernel: Matrix,
}

impl StoppingProblem {
    pub fn new(spec: &ModelSpec, g: Vec<f64>, terminal: Vec<f64>, mask: DomainMask, delta: f64) -> Result<Self> {
        let n = spec.n();
        if g.len() != n || terminal.len() != n || mask.len() != n {
            return Err(Error::Dimension {
                field: "stopping problem".into(),
                expected: n.to_string(),
                found: format!("g {}, G {}, mask {}", g.len(), terminal.len(), mask.len()),
            });
        }
        if let Some(x) = terminal.iter().position(|&v| v > 1e-12) {
            return Err(Error::Argument(format!(
                "terminal payoff must be nonpositive, G({x}) = {}",
                terminal[x]
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::Argument(format!("grid step must be positive, got {delta}")));
        }
        let kernel = metzler_exp(&spec.generator, &g, delta).map_err(|_| Error::KernelOverflow {
            magnitude: delta * g.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        })?;
        Ok(StoppingProblem {
            g,
            terminal,
            mask,
            delta,
            kernel,
        })
    }

    pub fn kernel(&self) -> &Matrix {
        &self.kernel
    }

    /// One backward step in exponential scale.
    fn sweep(&self, eu: &[f64]) -> Vec<f64> {
        let eg: Vec<f64> = self.terminal.iter().map(|v| v.exp()).collect();
        let ext: Vec<f64> = (0..eu.len())
            .map(|y| if self.mask.contains(y) { eu[y] } else { eg[y] })
            .collect();
        let cont = self.kernel.matvec(&ext);
        (0..eu.len())
            .map(|x| if self.mask.contains(x) { eg[x].max(cont[x]) } else { eg[x] })
            .collect()
    }

    /// Continuation value `ln Σ_y K(x,y) e^{u or G}` for every state.
    pub fn continuation(&self, u: &[f64]) -> Vec<f64> {
        let ext: Vec<f64> = (0..u.len())
            .map(|y| if self.mask.contains(y) { u[y].exp() } else { self.terminal[y].exp() })
            .collect();
        self.kernel.matvec(&ext).iter().map(|v| v.ln()).collect()
    }
}

/// Iterates the backward recursion until the sup-norm change of `e^u`
/// drops below `tol`. Returns the value and the number of sweeps used.
pub fn value_iteration_bounded(problem: &StoppingProblem, max_sweeps: usize, tol: f64) -> Result<(Vec<f64>, usize)> {
    let mut eu: Vec<f64> = problem.terminal.iter().map(|v| v.exp()).collect();
    let mut change = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let next = problem.sweep(&eu);
        change = next.iter().zip(&eu).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
        eu = next;
        if change < tol {
            return Ok((to_log(&eu, &problem.terminal, &problem.mask), sweep));
        }
    }
    Err(Error::StoppingNonConvergence {
        sweeps: max_sweeps,
        change,
    })
}

/// `u_T` on the grid: `horizon_steps` backward steps from `G`.
pub fn finite_horizon_value(problem: &StoppingProblem, horizon_steps: usize) -> Vec<f64> {
    let mut eu: Vec<f64> = problem.terminal.iter().map(|v| v.exp()).collect();
    for _ in 0..horizon_steps {
        eu = problem.sweep(&eu);
    }
    to_log(&eu, &problem.terminal, &problem.mask)
}

// Stopped states map back to `G` exactly rather than through `ln(exp(G))`.
fn to_log(eu: &[f64], terminal: &[f64], mask: &DomainMask) -> Vec<f64> {
    eu.iter()
        .enumerate()
        .map(|(x, v)| {
            if mask.contains(x) && *v != terminal[x].exp() {
                v.ln()
            } else {
                terminal[x]
            }
        })
        .collect()
}

/// States where stopping is optimal: `u(x) ≤ G(x) + tol`.
pub fn stopping_region(problem: &StoppingProblem, u: &[f64], tol: f64) -> Vec<bool> {
    u.iter().zip(&problem.terminal).map(|(a, b)| *a <= b + tol).collect()
}

/// Tail bound for a log-spaced grid of horizons, a sanity gate before
/// infinite-horizon solves: the bound must eventually drop below `1e-6`.
pub fn tail_decay_profile(spec: &ModelSpec, g: &[f64], a: f64, horizons: &[f64]) -> Result<Vec<(f64, f64)>> {
    horizons
        .iter()
        .map(|&t| Ok((t, tail_supremum_bound(spec, g, a, t)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// `max_y (E_y[one-step] - e^{w(y)})`; nonpositive for a supermartingale.
    pub max_super_violation: f64,
    /// `max |E_y[one-step] - e^{w(y)}|` over continuation states.
    pub max_mart_residual_on_continuation: f64,
    pub continuation_states: usize,
}

/// Checks that `exp(∫_0^{nδ} (f - λ) ds + w(X_{nδ}))`, stopped at the exit
/// of `B_m`, is a supermartingale and a martingale until the first impulse
/// time, by evaluating every one-step conditional expectation exactly.
pub fn martingale_check(spec: &ModelSpec, solution: &EigenSolution) -> Result<MartingaleReport> {
    let kernel = weighted_kernel(spec, solution.delta, solution.lambda)?;
    let mask = spec.mask(solution.m);
    let w = &solution.w;
    let (mw, _) = apply_m(spec, w);
    let ew: Vec<f64> = w.iter().map(|v| v.exp()).collect();
    let cond = kernel.apply(&extend_outside(spec, &mask, &ew));

    let mut report = MartingaleReport {
        max_super_violation: f64::NEG_INFINITY,
        max_mart_residual_on_continuation: 0.0,
        continuation_states: 0,
    };
    for y in (0..spec.n()).filter(|&y| mask.contains(y)) {
        let gap = cond[y] - ew[y];
        report.max_super_violation = report.max_super_violation.max(gap);
        if is_continuation(w[y], mw[y]) {
            report.continuation_states += 1;
            report.max_mart_residual_on_continuation = report.max_mart_residual_on_continuation.max(gap.abs());
        }
    }
    Ok(report)
}

/// `w > M w` beyond the classification tolerance.
pub fn is_continuation(w: f64, mw: f64) -> bool {
    w - mw > CONTINUATION_TOL * w.abs().max(mw.abs()).max(1.0)
}
