//! Nonlinear Perron eigenproblem `T̃^m_δ h = λ̃ h` on the bounded domain `B_m`.
//!
//! `T̃` is positively homogeneous and monotone, so normalized power iteration
//! converges to its positive eigenvector, and the Collatz-Wielandt ratios
//! `min_x T̃h/h ≤ λ̃ ≤ max_x T̃h/h` certify the eigenvalue at every step.
//! The pair is reported in log scale: `λ^m_δ = ln(λ̃)/δ`, `w = ln h` on
//! `B_m` with `max_{ξ∈U} w(ξ) = 0`, extended by `w = M w` off `B_m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operators::{apply_m, extend_outside, tilde_t_unchecked, DomainMask};
use crate::propagator::{weighted_kernel, WeightedKernel};

/// Power iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative Collatz-Wielandt spread and absolute fixed-point residual
    /// (multiplicative scale) required for convergence.
    pub tol: f64,
    pub max_iters: usize,
    /// Abort when the spread has not reached a new minimum for this many steps.
    pub stall_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iters: 100_000,
            stall_window: 1000,
        }
    }
}

/// `δ_k = 2^{-k}`
pub fn dyadic_step(k: u32) -> f64 {
    (-(k as f64)).exp2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    pub m: usize,
    pub k: u32,
    pub delta: f64,
    /// Multiplicative eigenvalue `λ̃^m_δ > 0`.
    pub lambda_tilde: f64,
    /// `λ^m_δ = ln(λ̃)/δ`
    pub lambda: f64,
    /// `w^m_δ`, extended by `M w` off `B_m`.
    pub w: Vec<f64>,
    pub iterations: usize,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub cw_spread: f64,
    /// Sup-norm fixed-point residual of the one-step equation.
    pub residual: f64,
}

/// Solves the one-step equation on `B_m` with step `2^{-k}`, starting from `h ≡ 1`.
pub fn solve_one_step(spec: &ModelSpec, m: usize, k: u32, opts: &SolverOptions) -> Result<EigenSolution> {
    solve_one_step_from(spec, m, k, opts, &vec![1.0; spec.n()])
}

/// As [`solve_one_step`] with a caller-supplied positive starting vector.
pub fn solve_one_step_from(
    spec: &ModelSpec,
    m: usize,
    k: u32,
    opts: &SolverOptions,
    start: &[f64],
) -> Result<EigenSolution> {
    if m > spec.max_level() {
        return Err(Error::Argument(format!(
            "exhaustion index {m} exceeds the largest level {}",
            spec.max_level()
        )));
    }
    let delta = dyadic_step(k);
    let kernel = weighted_kernel(spec, delta, 0.0)?;
    let mask = spec.mask(m);
    let inside: Vec<usize> = (0..spec.n()).filter(|&x| mask.contains(x)).collect();

    let mut h: Vec<f64> = (0..spec.n())
        .map(|x| if mask.contains(x) { start[x] } else { 0.0 })
        .collect();
    if let Some(&x) = inside.iter().find(|&&x| !(h[x] > 0.0)) {
        return Err(Error::NonPositive { state: x, value: h[x] });
    }

    let mut best_spread = f64::INFINITY;
    let mut best_at = 0usize;
    let (mut lower, mut upper) = (0.0, f64::INFINITY);
    for it in 1..=opts.max_iters {
        let y = tilde_t_unchecked(spec, &kernel, &mask, &h);
        lower = f64::INFINITY;
        upper = 0.0;
        for &x in &inside {
            if !(y[x] > 0.0) {
                return Err(Error::Positivity { state: x });
            }
            let r = y[x] / h[x];
            lower = f64::min(lower, r);
            upper = f64::max(upper, r);
        }
        let spread = upper - lower;
        let norm = spec
            .impulse_set
            .iter()
            .map(|&xi| y[xi])
            .fold(0.0, f64::max);
        let next: Vec<f64> = y.iter().map(|v| v / norm).collect();

        if spread <= opts.tol * upper {
            let lambda_tilde = (lower * upper).sqrt();
            let solution = assemble(spec, &mask, m, k, delta, lambda_tilde, &next, it, lower, upper);
            let residual = fixed_point_residual(spec, &kernel_shifted(spec, delta, solution.lambda)?, &mask, &solution);
            if residual <= opts.tol {
                return Ok(EigenSolution { residual, ..solution });
            }
        }
        if spread < best_spread {
            best_spread = spread;
            best_at = it;
        } else if it - best_at >= opts.stall_window {
            return Err(Error::Stalled {
                iterations: it,
                window: opts.stall_window,
                spread,
                lower,
                upper,
            });
        }
        h = next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        lower,
        upper,
    })
}

fn kernel_shifted(spec: &ModelSpec, delta: f64, lambda: f64) -> Result<WeightedKernel> {
    weighted_kernel(spec, delta, lambda)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    spec: &ModelSpec,
    mask: &DomainMask,
    m: usize,
    k: u32,
    delta: f64,
    lambda_tilde: f64,
    h: &[f64],
    iterations: usize,
    lower: f64,
    upper: f64,
) -> EigenSolution {
    let mut w: Vec<f64> = h.iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let (mw, _) = apply_m(spec, &w);
    for x in 0..spec.n() {
        if !mask.contains(x) {
            w[x] = mw[x];
        }
    }
    EigenSolution {
        m,
        k,
        delta,
        lambda_tilde,
        lambda: lambda_tilde.ln() / delta,
        w,
        iterations,
        cw_lower: lower,
        cw_upper: upper,
        cw_spread: upper - lower,
        residual: f64::NAN,
    }
}

/// Which side of the one-step maximum is attained at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveBranch {
    /// The expectation (continuation) branch.
    Expectation,
    /// The immediate-impulse branch `M w`.
    Impulse,
    /// Outside `B_m`, where `w = M w` by construction.
    Exit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// `|e^{w(x)} - max(branch₁, branch₂)|` per state.
    pub residuals: Vec<f64>,
    pub active: Vec<ActiveBranch>,
    pub max_residual: f64,
}

/// Recomputes both branches of the one-step equation for a candidate
/// solution, with the expectation taken through the kernel shifted by `λ`.
pub fn check_fixed_point(spec: &ModelSpec, solution: &EigenSolution) -> Result<FixedPointReport> {
    let mask = spec.mask(solution.m);
    let kernel = kernel_shifted(spec, solution.delta, solution.lambda)?;
    Ok(fixed_point_report(spec, &kernel, &mask, &solution.w))
}

fn fixed_point_residual(spec: &ModelSpec, kernel: &WeightedKernel, mask: &DomainMask, solution: &EigenSolution) -> f64 {
    fixed_point_report(spec, kernel, mask, &solution.w).max_residual
}

fn fixed_point_report(spec: &ModelSpec, kernel: &WeightedKernel, mask: &DomainMask, w: &[f64]) -> FixedPointReport {
    let (mw, _) = apply_m(spec, w);
    let ew: Vec<f64> = w.iter().map(|v| v.exp()).collect();
    let ext = extend_outside(spec, mask, &ew);
    let expectation = kernel.apply(&ext);
    let mut residuals = Vec::with_capacity(spec.n());
    let mut active = Vec::with_capacity(spec.n());
    for x in 0..spec.n() {
        let impulse = mw[x].exp();
        if mask.contains(x) {
            let rhs = expectation[x].max(impulse);
            residuals.push((ew[x] - rhs).abs());
            active.push(if expectation[x] >= impulse {
                ActiveBranch::Expectation
            } else {
                ActiveBranch::Impulse
            });
        } else {
            residuals.push((ew[x] - impulse).abs());
            active.push(ActiveBranch::Exit);
        }
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    FixedPointReport {
        residuals,
        active,
        max_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{m1, m2, m3};

    #[test]
    fn scalar_eigenpair() {
        let sol = solve_one_step(&m1(), 0, 0, &SolverOptions::default()).unwrap();
        assert!((sol.lambda + 0.5).abs() < 1e-14);
        assert_eq!(sol.w, vec![0.0]);
        let report = check_fixed_point(&m1(), &sol).unwrap();
        assert!(report.max_residual < 1e-14);
        assert_eq!(report.active, vec![ActiveBranch::Expectation]);
    }

    #[test]
    fn normalization_and_max_structure() {
        for spec in [m2(), m3()] {
            for m in 0..=spec.max_level() {
                for &k in &spec.grid_levels {
                    let sol = solve_one_step(&spec, m, k, &SolverOptions::default()).unwrap();
                    let top = spec.impulse_set.iter().map(|&u| sol.w[u]).fold(f64::NEG_INFINITY, f64::max);
                    assert!(top.abs() < 1e-10);
                    let (mw, _) = apply_m(&spec, &sol.w);
                    for x in 0..spec.n() {
                        assert!(sol.w[x] >= mw[x] - 1e-9);
                    }
                    assert!(sol.residual <= 1e-12, "residual {}", sol.residual);
                    assert!(sol.lambda_tilde > 0.0);
                    assert!(sol.cw_lower <= sol.lambda_tilde && sol.lambda_tilde <= sol.cw_upper);
                }
            }
        }
    }

    #[test]
    fn outside_values_are_intervention_values() {
        let spec = m3();
        let sol = solve_one_step(&spec, 0, 0, &SolverOptions::default()).unwrap();
        let (mw, _) = apply_m(&spec, &sol.w);
        assert_eq!(sol.w[2], mw[2]);
    }

    #[test]
    fn ladder_is_monotone_in_m() {
        let spec = m3();
        let opts = SolverOptions::default();
        let a = solve_one_step(&spec, 0, 0, &opts).unwrap();
        let b = solve_one_step(&spec, 1, 0, &opts).unwrap();
        assert!(a.lambda <= b.lambda + 1e-12);
    }

    #[test]
    fn perturbation_is_detected() {
        let spec = m2();
        let mut sol = solve_one_step(&spec, 0, 0, &SolverOptions::default()).unwrap();
        sol.w[1] += 0.01;
        let report = check_fixed_point(&spec, &sol).unwrap();
        assert!(report.residuals[1] >= 0.009 * sol.w[1].exp().min(1.0));
        assert!(report.max_residual >= 0.005);
    }

    #[test]
    fn start_vector_scale_does_not_matter() {
        let spec = m3();
        let opts = SolverOptions::default();
        let base = solve_one_step(&spec, 1, 1, &opts).unwrap();
        for alpha in [1e-3, 3.7, 1e4] {
            let sol = solve_one_step_from(&spec, 1, 1, &opts, &[alpha; 3]).unwrap();
            assert!((sol.lambda - base.lambda).abs() < 1e-11);
            for (a, b) in sol.w.iter().zip(&base.w) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let opts = SolverOptions {
            max_iters: 2,
            ..SolverOptions::default()
        };
        let err = solve_one_step(&m3(), 1, 2, &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }), "{err:?}");
    }

    #[test]
    fn bad_level_is_rejected() {
        assert!(solve_one_step(&m2(), 3, 0, &SolverOptions::default()).is_err());
    }
}
