//! Feynman-Kac weighted transition operators of the chain.
//!
//! Every expectation of the form `E_x[exp(∫_0^δ (f(X_s) - a) ds) h(X_δ)]` is
//! the matrix-vector product `K h` with `K = exp(δ (Q + diag(f - a)))`. The
//! exponential is formed by uniformization, which keeps every entry
//! nonnegative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::ModelSpec;

/// Relative Collatz-Wielandt tolerance used for spectral radii of kernels.
const SPECTRAL_TOL: f64 = 1e-15;

/// Largest `β δ` handled by a single uniformization series before the
/// step is halved and the result squared.
const MAX_POISSON_MEAN: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedKernel {
    pub delta: f64,
    pub shift: f64,
    pub matrix: Matrix,
}

impl WeightedKernel {
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    /// `(K h)(x) = Σ_y K(x, y) h(y)`
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.matrix.matvec(h)
    }
}

/// `exp(δ (Q + diag(f - shift)))` for the model's generator and running cost.
pub fn weighted_kernel(spec: &ModelSpec, delta: f64, shift: f64) -> Result<WeightedKernel> {
    let rate: Vec<f64> = spec.running_cost.iter().map(|f| f - shift).collect();
    let matrix = metzler_exp(&spec.generator, &rate, delta).map_err(|_| Error::KernelOverflow {
        magnitude: delta * (spec.running_cost_norm() + shift.abs()),
    })?;
    Ok(WeightedKernel {
        delta,
        shift,
        matrix,
    })
}

/// `exp(δ (Q + diag(rate)))` by uniformization with optional squaring.
/// `Err(())` signals non-finite output.
pub(crate) fn metzler_exp(q: &Matrix, rate: &[f64], delta: f64) -> Result<Matrix, ()> {
    assert!(delta > 0.0, "time step must be positive");
    let n = q.rows();
    let mut a = q.clone();
    for (i, r) in rate.iter().enumerate() {
        a[(i, i)] += r;
    }
    let beta = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if beta == 0.0 {
        // A has a zero diagonal, so Q's rows sum to zero only if A = 0
        if a.max_abs() == 0.0 {
            return Ok(Matrix::identity(n));
        }
    }
    let beta = if beta == 0.0 { a.max_abs() } else { beta };

    let mut squarings = 0;
    let mut step = delta;
    while beta * step > MAX_POISSON_MEAN {
        step *= 0.5;
        squarings += 1;
    }

    // P = I + A / β is entrywise nonnegative
    let mut p = a.scaled(1.0 / beta);
    for i in 0..n {
        p[(i, i)] += 1.0;
        if p[(i, i)] < 0.0 {
            p[(i, i)] = 0.0;
        }
    }
    let p_norm = p.norm_inf().max(1.0);
    let mean = beta * step;

    // Σ_j e^{-mean} mean^j / j! P^j, with the Poisson weights kept in log
    // space so large means do not underflow the first terms.
    let mut result = Matrix::zeros(n, n);
    let mut power = Matrix::identity(n);
    let mut log_weight = -mean;
    let mut j = 0usize;
    loop {
        let w = log_weight.exp();
        result.add_scaled(w, &power);
        j += 1;
        log_weight += mean.ln() - (j as f64).ln();
        // tail bound Σ_{i≥j} w_i p^i, geometric once j exceeds mean * p
        let ratio = mean * p_norm / (j as f64 + 1.0);
        if ratio < 1.0 {
            let tail = (log_weight + (j as f64) * p_norm.ln()).exp() / (1.0 - ratio);
            if tail < 1e-17 * result.max_abs().max(1.0) {
                break;
            }
        }
        power = power.matmul(&p);
        if j > 10_000 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    if !result.is_finite() {
        return Err(());
    }
    Ok(result)
}

/// Spectral bound of the Metzler matrix `Q + diag(g)`.
pub fn spectral_bound(q: &Matrix, g: &[f64]) -> Result<f64> {
    let k = metzler_exp(q, g, 1.0).map_err(|_| Error::KernelOverflow {
        magnitude: g.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
    })?;
    let rho = linalg::perron_root(&k, SPECTRAL_TOL)?;
    Ok(rho.ln())
}

/// The semigroup type `r(f)`: the exponential growth rate of
/// `sup_x E_x[exp(∫_0^t f(X_s) ds)]`.
pub fn semigroup_type(spec: &ModelSpec) -> Result<f64> {
    spectral_bound(&spec.generator, &spec.running_cost)
}

/// `U_0^{g-a} 1`, the solution of `(Q + diag(g - a)) v = -1`.
pub fn resolvent_one(spec: &ModelSpec, g: &[f64], a: f64) -> Result<Vec<f64>> {
    let type_bound = spectral_bound(&spec.generator, g)?;
    if !(type_bound < a && a < 0.0) {
        return Err(Error::ResolventPrecondition { type_bound, a });
    }
    let mut m = spec.generator.clone();
    for (i, gi) in g.iter().enumerate() {
        m[(i, i)] += gi - a;
    }
    let v = linalg::solve(&m, &vec![-1.0; spec.n()])?;
    debug_assert!(v.iter().all(|&x| x > 0.0));
    Ok(v)
}

/// Upper bound on `sup_x sup_{τ ≥ T} E_x[exp(∫_0^τ g(X_s) ds)]`:
/// `e^{aT} ‖U_0^{g-a} 1‖ / min_x U_0^{g-a} 1(x)`.
pub fn tail_supremum_bound(spec: &ModelSpec, g: &[f64], a: f64, horizon: f64) -> Result<f64> {
    let v = resolvent_one(spec, g, a)?;
    let sup = v.iter().copied().fold(0.0, f64::max);
    let inf = v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((a * horizon).exp() / inf * sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{m1, m2};

    #[test]
    fn scalar_kernel() {
        let k = weighted_kernel(&m1(), 2.0, 0.0).unwrap();
        assert!((k.matrix[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_state_closed_form() {
        let spec = m2().with_running_cost(vec![0.0, 0.0]);
        let k = weighted_kernel(&spec, 1.0, 0.0).unwrap();
        let e = (-2.0f64).exp();
        let diag = (1.0 + e) / 2.0;
        let off = (1.0 - e) / 2.0;
        for (i, j, want) in [(0, 0, diag), (0, 1, off), (1, 0, off), (1, 1, diag)] {
            assert!((k.matrix[(i, j)] - want).abs() < 1e-14, "({i},{j})");
        }
        for s in k.matrix.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn semigroup_type_examples() {
        assert!((semigroup_type(&m1()).unwrap() + 0.5).abs() < 1e-13);
        let zero = m2().with_running_cost(vec![0.0, 0.0]);
        assert!(semigroup_type(&zero).unwrap().abs() < 1e-13);
        // [[-1, 1], [1, -3]]: r^2 + 4r + 2 = 0
        let expected = -2.0 + 2f64.sqrt();
        assert!((semigroup_type(&m2()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn resolvent_scalar() {
        let v = resolvent_one(&m1(), &[-0.5], -0.25).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-14);
        let v = resolvent_one(&m1(), &[-0.5], -0.5 + 1e-9).unwrap();
        assert!(v[0].is_finite() && (v[0] / 1e9 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn resolvent_rejects_bad_shift() {
        assert!(matches!(
            resolvent_one(&m1(), &[-0.5], -0.6),
            Err(Error::ResolventPrecondition { .. })
        ));
        assert!(matches!(
            resolvent_one(&m1(), &[-0.5], 0.1),
            Err(Error::ResolventPrecondition { .. })
        ));
    }

    #[test]
    fn resolvent_two_state_by_elimination() {
        let spec = m2();
        let r = semigroup_type(&spec).unwrap();
        let a = r / 2.0;
        let v = resolvent_one(&spec, &spec.running_cost, a).unwrap();
        // [[-1 - a, 1], [1, -3 - a]] v = [-1, -1], eliminated by hand
        let (p, q, s) = (-1.0 - a, 1.0, -3.0 - a);
        let v1 = (-1.0 + q / p) / (s - q * q / p);
        let v0 = (-1.0 - q * v1) / p;
        assert!(v.iter().all(|&x| x > 0.0));
        assert!((v[0] - v0).abs() < 1e-12 && (v[1] - v1).abs() < 1e-12);
    }

    #[test]
    fn tail_bound_examples() {
        let b0 = tail_supremum_bound(&m1(), &[-0.5], -0.25, 0.0).unwrap();
        assert!((b0 - 1.0).abs() < 1e-14);
        let mut last = b0;
        for t in [1.0, 10.0, 100.0, 1000.0] {
            let b = tail_supremum_bound(&m1(), &[-0.5], -0.25, t).unwrap();
            assert!(b < last);
            last = b;
        }
        assert!(last < 1e-100);

        let spec = m2();
        let v = resolvent_one(&spec, &spec.running_cost, -0.25).unwrap();
        let ratio = v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
        let b = tail_supremum_bound(&spec, &spec.running_cost, -0.25, 10.0).unwrap();
        assert!((b - (-2.5f64).exp() * ratio).abs() < 1e-14);
    }

    #[test]
    fn overflow_is_reported() {
        let spec = m1().with_running_cost(vec![-1e6]);
        let err = weighted_kernel(&spec, 1.0, -2e6).unwrap_err();
        assert!(matches!(err, Error::KernelOverflow { .. }));
    }
}
