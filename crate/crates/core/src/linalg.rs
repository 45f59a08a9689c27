//! Dense desk-scale linear algebra: a row-major matrix, partial-pivot
//! Gaussian elimination, strongly connected components of a zero pattern,
//! and Perron roots of nonnegative matrices.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row vectors. Returns `None` when rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(l)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Principal submatrix on the given index set.
    pub fn submatrix(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    assert!(a.is_square() && a.rows() == b.len());
    let n = b.len();
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("nonempty pivot range");
        let pivot = m[(pivot_row, col)];
        if pivot.abs() <= scale * 1e-300 || !pivot.is_finite() {
            return Err(Error::Singular { column: col, pivot });
        }
        if pivot_row != col {
            for j in 0..n {
                m.data.swap(col * n + j, pivot_row * n + j);
            }
            rhs.swap(col, pivot_row);
        }
        for i in col + 1..n {
            let factor = m[(i, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(i, j)] -= factor * v;
            }
            rhs[i] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[(i, i)];
    }
    Ok(x)
}

/// Strongly connected components of the directed graph with an edge
/// `i -> j` whenever `pattern(i, j)` is true. Components are returned in
/// reverse topological order of the condensation (sinks first).
pub fn strongly_connected_components(
    n: usize,
    pattern: impl Fn(usize, usize) -> bool,
) -> Vec<Vec<usize>> {
    // Tarjan, iterative.
    const UNSET: usize = usize::MAX;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| pattern(i, j)).collect())
        .collect();
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;

    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if index[w] == UNSET {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// States reachable from `start` (including itself) along positive entries.
pub fn reachable_from(n: usize, start: usize, pattern: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = vec![start];
    seen[start] = true;
    while let Some(i) = queue.pop() {
        for j in 0..n {
            if !seen[j] && pattern(i, j) {
                seen[j] = true;
                queue.push(j);
            }
        }
    }
    seen
}

/// Outcome of a Collatz-Wielandt power iteration on an irreducible
/// nonnegative block.
#[derive(Debug, Clone, Copy)]
pub struct PerronEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

const PERRON_MAX_ITERS: usize = 200_000;

/// Perron root of an irreducible nonnegative matrix by power iteration with
/// Collatz-Wielandt stopping. Blocks with an all-zero diagonal may be
/// periodic, so they are iterated with a diagonal shift.
fn irreducible_perron_root(block: &Matrix, rel_tol: f64) -> Result<PerronEstimate> {
    let n = block.rows();
    if n == 1 {
        let v = block[(0, 0)];
        return Ok(PerronEstimate {
            value: v,
            lower: v,
            upper: v,
            iterations: 0,
        });
    }
    let shift = if (0..n).any(|i| block[(i, i)] > 0.0) {
        0.0
    } else {
        block.max_abs()
    };
    let mut h = vec![1.0; n];
    let mut lower = 0.0;
    let mut upper = f64::INFINITY;
    for it in 1..=PERRON_MAX_ITERS {
        let mut y = block.matvec(&h);
        for (yi, hi) in y.iter_mut().zip(&h) {
            *yi += shift * hi;
        }
        lower = f64::INFINITY;
        upper = 0.0;
        for (yi, hi) in y.iter().zip(&h) {
            let r = yi / hi;
            lower = f64::min(lower, r);
            upper = f64::max(upper, r);
        }
        if upper - lower <= rel_tol * upper {
            let value = (lower * upper).sqrt() - shift;
            return Ok(PerronEstimate {
                value,
                lower: lower - shift,
                upper: upper - shift,
                iterations: it,
            });
        }
        let top = y.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 || !top.is_finite() {
            return Ok(PerronEstimate {
                value: 0.0,
                lower: 0.0,
                upper: 0.0,
                iterations: it,
            });
        }
        for (hi, yi) in h.iter_mut().zip(&y) {
            // keep strictly positive: irreducible blocks fill in within n steps
            *hi = (yi / top).max(f64::MIN_POSITIVE);
        }
    }
    Err(Error::NonConvergence {
        iterations: PERRON_MAX_ITERS,
        lower: lower - shift,
        upper: upper - shift,
    })
}

/// Spectral radius of a nonnegative square matrix. Reducible matrices are
/// split into strongly connected classes and the largest class root wins.
pub fn perron_root(m: &Matrix, rel_tol: f64) -> Result<f64> {
    let comps = strongly_connected_components(m.rows(), |i, j| m[(i, j)] > 0.0);
    let mut best = 0.0_f64;
    for comp in &comps {
        let est = irreducible_perron_root(&m.submatrix(comp), rel_tol)?;
        best = best.max(est.value);
    }
    Ok(best)
}

/// Growth rate of `(M^n 1)(x)` for every start state `x`: the largest class
/// root among the classes accessible from `x`.
pub fn perron_root_by_start(m: &Matrix, rel_tol: f64) -> Result<Vec<f64>> {
    let n = m.rows();
    let comps = strongly_connected_components(n, |i, j| m[(i, j)] > 0.0);
    let mut comp_of = vec![0usize; n];
    for (c, comp) in comps.iter().enumerate() {
        for &i in comp {
            comp_of[i] = c;
        }
    }
    // sinks come first, so successors of a component are already resolved
    let mut reach = vec![0.0_f64; comps.len()];
    for (c, comp) in comps.iter().enumerate() {
        let mut best = irreducible_perron_root(&m.submatrix(comp), rel_tol)?.value;
        for &i in comp {
            for j in 0..n {
                if m[(i, j)] > 0.0 && comp_of[j] != c {
                    best = best.max(reach[comp_of[j]]);
                }
            }
        }
        reach[c] = best;
    }
    Ok((0..n).map(|i| reach[comp_of[i]]).collect())
}

/// Collatz-Wielandt estimate on an irreducible nonnegative matrix, exposing
/// the final bracket.
pub fn perron_estimate(m: &Matrix, rel_tol: f64) -> Result<PerronEstimate> {
    irreducible_perron_root(m, rel_tol)
}

pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
