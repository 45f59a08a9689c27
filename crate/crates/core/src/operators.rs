//! Intervention and one-step operators.
//!
//! Additive scale: `M h(x) = max_ξ c(x, ξ) + h(ξ)`.
//! Multiplicative scale, for positive `h` on a bounded domain `B_m`:
//!
//! ```text
//! M̃ h(x) = max_ξ e^{c(x, ξ)} h(ξ)
//! P̃ h(x) = Σ_y K(x, y) [y ∈ B_m ? h(y) : M̃ h(y)]
//! T̃ h(x) = max(P̃ h(x), M̃ P̃ h(x))
//! ```
//!
//! where `K` is the unshifted weighted kernel. Arrays always span the full
//! state set; entries off `B_m` are never read except through `M̃`, which
//! only looks at impulse targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::propagator::WeightedKernel;

/// Indicator of the bounded domain `B_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainMask {
    pub m: usize,
    pub inside: Vec<bool>,
}

impl DomainMask {
    pub fn full(n: usize) -> Self {
        DomainMask {
            m: 0,
            inside: vec![true; n],
        }
    }

    pub fn contains(&self, x: usize) -> bool {
        self.inside[x]
    }

    pub fn is_full(&self) -> bool {
        self.inside.iter().all(|&b| b)
    }

    pub fn len(&self) -> usize {
        self.inside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inside.is_empty()
    }
}

/// `M h` together with the maximizing impulse position for every state.
/// Ties go to the lowest position in the impulse set.
pub fn apply_m(spec: &ModelSpec, h: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut values = Vec::with_capacity(spec.n());
    let mut argmax = Vec::with_capacity(spec.n());
    for x in 0..spec.n() {
        let mut best = f64::NEG_INFINITY;
        let mut best_j = 0;
        for (j, &xi) in spec.impulse_set.iter().enumerate() {
            let v = spec.cost(x, j) + h[xi];
            if v > best {
                best = v;
                best_j = j;
            }
        }
        values.push(best);
        argmax.push(best_j);
    }
    (values, argmax)
}

/// `M̃ h`. Only the impulse-target entries of `h` are read; they must be positive.
pub fn apply_tilde_m(spec: &ModelSpec, h: &[f64]) -> Result<Vec<f64>> {
    for &xi in &spec.impulse_set {
        if !(h[xi] > 0.0) {
            return Err(Error::NonPositive {
                state: xi,
                value: h[xi],
            });
        }
    }
    Ok(tilde_m_unchecked(spec, h))
}

fn tilde_m_unchecked(spec: &ModelSpec, h: &[f64]) -> Vec<f64> {
    (0..spec.n())
        .map(|x| {
            spec.impulse_set
                .iter()
                .enumerate()
                .map(|(j, &xi)| spec.cost(x, j).exp() * h[xi])
                .fold(0.0, f64::max)
        })
        .collect()
}

fn check_dims(spec: &ModelSpec, kernel: &WeightedKernel, mask: &DomainMask, h: &[f64]) -> Result<()> {
    let n = spec.n();
    for (field, len) in [("kernel", kernel.n()), ("mask", mask.len()), ("h", h.len())] {
        if len != n {
            return Err(Error::Dimension {
                field: field.into(),
                expected: n.to_string(),
                found: len.to_string(),
            });
        }
    }
    Ok(())
}

/// `ĥ`: `h` on `B_m`, `M̃ h` outside.
pub fn extend_outside(spec: &ModelSpec, mask: &DomainMask, h: &[f64]) -> Vec<f64> {
    let tilde = tilde_m_unchecked(spec, h);
    (0..spec.n())
        .map(|y| if mask.contains(y) { h[y] } else { tilde[y] })
        .collect()
}

/// `P̃^m_δ h` on `B_m`; entries off `B_m` are zero.
pub fn apply_tilde_p(
    spec: &ModelSpec,
    kernel: &WeightedKernel,
    mask: &DomainMask,
    h: &[f64],
) -> Result<Vec<f64>> {
    check_dims(spec, kernel, mask, h)?;
    for x in (0..spec.n()).filter(|&x| mask.contains(x)) {
        if !(h[x] > 0.0) {
            return Err(Error::NonPositive { state: x, value: h[x] });
        }
    }
    Ok(tilde_p_unchecked(spec, kernel, mask, h))
}

fn tilde_p_unchecked(spec: &ModelSpec, kernel: &WeightedKernel, mask: &DomainMask, h: &[f64]) -> Vec<f64> {
    let ext = extend_outside(spec, mask, h);
    (0..spec.n())
        .map(|x| {
            if mask.contains(x) {
                kernel.matrix.row(x).iter().zip(&ext).map(|(k, v)| k * v).sum()
            } else {
                0.0
            }
        })
        .collect()
}

/// `T̃^m_δ h = max(P̃ h, M̃ P̃ h)` on `B_m`; entries off `B_m` are zero.
pub fn apply_tilde_t(
    spec: &ModelSpec,
    kernel: &WeightedKernel,
    mask: &DomainMask,
    h: &[f64],
) -> Result<Vec<f64>> {
    let p = apply_tilde_p(spec, kernel, mask, h)?;
    Ok(max_with_impulse(spec, mask, p))
}

pub(crate) fn tilde_t_unchecked(
    spec: &ModelSpec,
    kernel: &WeightedKernel,
    mask: &DomainMask,
    h: &[f64],
) -> Vec<f64> {
    max_with_impulse(spec, mask, tilde_p_unchecked(spec, kernel, mask, h))
}

fn max_with_impulse(spec: &ModelSpec, mask: &DomainMask, p: Vec<f64>) -> Vec<f64> {
    let mp = tilde_m_unchecked(spec, &p);
    p.iter()
        .zip(&mp)
        .enumerate()
        .map(|(x, (a, b))| if mask.contains(x) { a.max(*b) } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{m1, m2, m3};
    use crate::propagator::weighted_kernel;

    fn two_targets() -> ModelSpec {
        ModelSpec::new(
            vec!["a".into(), "b".into()],
            &[vec![-1.0, 1.0], vec![1.0, -1.0]],
            vec![0.0, -1.0],
            vec![0, 1],
            &[vec![-0.1, -0.2], vec![-0.1, -0.2]],
            vec![vec![0, 1]],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn m_examples() {
        let (v, arg) = apply_m(&m1(), &[0.0]);
        assert_eq!((v, arg), (vec![-1.0], vec![0]));

        let (v, _) = apply_m(&m2(), &[0.0, -0.3]);
        assert_eq!(v, vec![-0.1, -0.1]);

        let (v, arg) = apply_m(&two_targets(), &[0.0, -0.05]);
        assert!((v[0] + 0.1).abs() < 1e-15);
        assert_eq!(arg[0], 0);

        let tie = two_targets().with_uniform_shift_cost(-0.1);
        let (_, arg) = apply_m(&tie, &[0.0, 0.0]);
        assert_eq!(arg, vec![0, 0]);
    }

    #[test]
    fn tilde_m_examples() {
        let v = apply_tilde_m(&m1(), &[1.0]).unwrap();
        assert!((v[0] - (-1.0f64).exp()).abs() < 1e-16);

        let g = [0.0, -0.3];
        let h: Vec<f64> = g.iter().map(|x: &f64| x.exp()).collect();
        let tilde = apply_tilde_m(&m2(), &h).unwrap();
        let (plain, _) = apply_m(&m2(), &g);
        for (a, b) in tilde.iter().zip(&plain) {
            assert!((a.ln() - b).abs() < 1e-12);
        }

        let doubled = apply_tilde_m(&m2(), &[2.0 * h[0], 2.0 * h[1]]).unwrap();
        for (a, b) in doubled.iter().zip(&tilde) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
        assert!(apply_tilde_m(&m1(), &[0.0]).is_err());
    }

    #[test]
    fn tilde_p_examples() {
        let spec = m1();
        let k = weighted_kernel(&spec, 1.0, 0.0).unwrap();
        let p = apply_tilde_p(&spec, &k, &spec.mask(0), &[1.0]).unwrap();
        assert!((p[0] - (-0.5f64).exp()).abs() < 1e-15);

        let spec = m2();
        let k = weighted_kernel(&spec, 1.0, 0.0).unwrap();
        let p = apply_tilde_p(&spec, &k, &spec.mask(0), &[1.0, 1.0]).unwrap();
        for (a, b) in p.iter().zip(k.matrix.row_sums()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tilde_p_with_exit() {
        let spec = m3();
        let k = weighted_kernel(&spec, 1.0, 0.0).unwrap();
        let mask = spec.mask(0);
        let p = apply_tilde_p(&spec, &k, &mask, &[1.0, 1.0, 7.0]).unwrap();
        // exit to state 2 is replaced by the best shift from 2 into U
        let exit = f64::max(spec.cost(2, 0).exp(), spec.cost(2, 1).exp());
        for x in 0..2 {
            let want = k.matrix[(x, 0)] + k.matrix[(x, 1)] + k.matrix[(x, 2)] * exit;
            assert!((p[x] - want).abs() < 1e-15);
        }
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn tilde_t_scalar() {
        let spec = m1();
        let k = weighted_kernel(&spec, 1.0, 0.0).unwrap();
        let t = apply_tilde_t(&spec, &k, &spec.mask(0), &[1.0]).unwrap();
        assert!((t[0] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let k = weighted_kernel(&m1(), 1.0, 0.0).unwrap();
        let spec = m2();
        assert!(matches!(
            apply_tilde_p(&spec, &k, &spec.mask(0), &[1.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }
}
