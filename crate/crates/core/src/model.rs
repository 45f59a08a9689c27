//! Problem instances: a finite-state generator, running and shift costs, the
//! impulse set, the exhaustion chain of bounded domains and the dyadic grid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::operators::DomainMask;

/// Absolute tolerance for row sums and the triangle inequality.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// A validated-on-demand impulse control instance over a finite state set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub states: Vec<String>,
    /// Row-major generator `Q`, rows sum to zero.
    pub generator: Matrix,
    /// Running reward rate `f`, nonpositive after normalization.
    pub running_cost: Vec<f64>,
    /// Indices of the states the controller may shift to.
    pub impulse_set: Vec<usize>,
    /// `shift_cost[(x, j)]` is the cost of shifting from `x` to `impulse_set[j]`.
    pub shift_cost: Matrix,
    /// Nested index sets `B_0 ⊂ … ⊂ B_M`, each sorted.
    pub exhaustion_chain: Vec<Vec<usize>>,
    /// Dyadic exponents `k` with step `2^-k`.
    pub grid_levels: Vec<u32>,
}

/// On-disk schema (TOML). State references are labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    generator: Vec<Vec<f64>>,
    running_cost: Vec<f64>,
    impulse_set: Vec<String>,
    shift_cost: Vec<Vec<f64>>,
    exhaustion_chain: Vec<Vec<String>>,
    grid_levels: Vec<u32>,
}

/// Parses a model document. Only structure is checked here; see [`validate_model`].
pub fn load_model(source: &str) -> Result<ModelSpec> {
    let file: ModelFile = toml::from_str(source).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(source, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        Error::Parse {
            message: e.message().to_string(),
            line,
            column,
        }
    })?;
    ModelSpec::from_file(file)
}

pub fn load_model_path(path: impl AsRef<std::path::Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_model(&text)
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn dim_err(field: &str, expected: impl fmt::Display, found: impl fmt::Display) -> Error {
    Error::Dimension {
        field: field.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

impl ModelSpec {
    fn from_file(file: ModelFile) -> Result<Self> {
        let n = file.states.len();
        let lookup = |field: &str, label: &str| -> Result<usize> {
            file.states
                .iter()
                .position(|s| s == label)
                .ok_or_else(|| Error::UnknownState {
                    field: field.to_string(),
                    label: label.to_string(),
                })
        };
        let impulse_set = file
            .impulse_set
            .iter()
            .map(|l| lookup("impulse_set", l))
            .collect::<Result<Vec<_>>>()?;
        let exhaustion_chain = file
            .exhaustion_chain
            .iter()
            .map(|set| {
                let mut idx = set
                    .iter()
                    .map(|l| lookup("exhaustion_chain", l))
                    .collect::<Result<Vec<_>>>()?;
                idx.sort_unstable();
                idx.dedup();
                Ok(idx)
            })
            .collect::<Result<Vec<_>>>()?;
        if n == 0 {
            return Err(dim_err("states", "at least one state", 0));
        }
        ModelSpec::new(
            file.states,
            &file.generator,
            file.running_cost,
            impulse_set,
            &file.shift_cost,
            exhaustion_chain,
            file.grid_levels,
        )
    }

    /// Assembles a model after checking array shapes.
    pub fn new(
        states: Vec<String>,
        generator: &[Vec<f64>],
        running_cost: Vec<f64>,
        impulse_set: Vec<usize>,
        shift_cost: &[Vec<f64>],
        exhaustion_chain: Vec<Vec<usize>>,
        grid_levels: Vec<u32>,
    ) -> Result<Self> {
        let n = states.len();
        if generator.len() != n {
            return Err(dim_err("generator", format!("{n} rows"), generator.len()));
        }
        if let Some(row) = generator.iter().find(|r| r.len() != n) {
            return Err(dim_err("generator", format!("{n} columns"), row.len()));
        }
        if running_cost.len() != n {
            return Err(dim_err("running_cost", n, running_cost.len()));
        }
        let u = impulse_set.len();
        if shift_cost.len() != n {
            return Err(dim_err("shift_cost", format!("{n} rows"), shift_cost.len()));
        }
        if let Some(row) = shift_cost.iter().find(|r| r.len() != u) {
            return Err(dim_err("shift_cost", format!("{u} columns"), row.len()));
        }
        if let Some(&bad) = impulse_set
            .iter()
            .chain(exhaustion_chain.iter().flatten())
            .find(|&&i| i >= n)
        {
            return Err(dim_err("state index", format!("< {n}"), bad));
        }
        Ok(ModelSpec {
            states,
            generator: Matrix::from_rows(generator).expect("checked shape"),
            running_cost,
            impulse_set,
            shift_cost: Matrix::from_rows(shift_cost).unwrap_or_else(|| Matrix::zeros(n, 0)),
            exhaustion_chain,
            grid_levels,
        })
    }

    /// Serializes back to the on-disk schema.
    pub fn to_toml(&self) -> String {
        let labels = |idx: &[usize]| idx.iter().map(|&i| self.states[i].clone()).collect();
        let file = ModelFile {
            states: self.states.clone(),
            generator: self.generator.to_rows(),
            running_cost: self.running_cost.clone(),
            impulse_set: labels(&self.impulse_set),
            shift_cost: self.shift_cost.to_rows(),
            exhaustion_chain: self.exhaustion_chain.iter().map(|s| labels(s)).collect(),
            grid_levels: self.grid_levels.clone(),
        };
        toml::to_string(&file).expect("model serializes")
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// Largest exhaustion index `M`.
    pub fn max_level(&self) -> usize {
        self.exhaustion_chain.len().saturating_sub(1)
    }

    pub fn mask(&self, m: usize) -> DomainMask {
        let mut inside = vec![false; self.n()];
        for &i in &self.exhaustion_chain[m] {
            inside[i] = true;
        }
        DomainMask { m, inside }
    }

    /// Shift cost from state `x` to the `j`-th impulse target.
    pub fn cost(&self, x: usize, j: usize) -> f64 {
        self.shift_cost[(x, j)]
    }

    /// `c_0`, the largest shift cost.
    pub fn c0(&self) -> f64 {
        self.shift_cost
            .as_slice()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn running_cost_norm(&self) -> f64 {
        sup_norm(&self.running_cost)
    }

    pub fn shift_cost_norm(&self) -> f64 {
        self.shift_cost.max_abs()
    }

    /// Same model with a different running cost.
    pub fn with_running_cost(&self, f: Vec<f64>) -> ModelSpec {
        assert_eq!(f.len(), self.n());
        ModelSpec {
            running_cost: f,
            ..self.clone()
        }
    }

    /// Same model with every shift cost replaced by `value`.
    pub fn with_uniform_shift_cost(&self, value: f64) -> ModelSpec {
        let mut out = self.clone();
        out.shift_cost = Matrix::from_rows(&vec![vec![value; self.impulse_set.len()]; self.n()])
            .expect("rectangular");
        out
    }

    /// Position of state `x` in the impulse set, if any.
    pub fn impulse_position(&self, x: usize) -> Option<usize> {
        self.impulse_set.iter().position(|&u| u == x)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Which structural requirement a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Invariant {
    NonFinite,
    GeneratorOffDiagonal,
    GeneratorRowSum,
    RunningCostSign,
    ShiftCostSign,
    TriangleInequality,
    ImpulseSetEmpty,
    ImpulseSetOrder,
    ChainEmpty,
    ChainNesting,
    ImpulseSetOutsideBase,
    ChainCoverage,
    Escape,
    Irreducible,
    GridLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}", self.invariant, self.message)
    }
}

/// Checks every structural requirement of the model. An empty report means
/// the downstream solvers' preconditions hold.
pub fn validate_model(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |invariant, message: String| out.push(Violation { invariant, message });
    let n = spec.n();
    let q = &spec.generator;

    if !q.is_finite() || !spec.shift_cost.is_finite() || spec.running_cost.iter().any(|x| !x.is_finite()) {
        push(Invariant::NonFinite, "model contains non-finite numbers".into());
        return out;
    }

    for i in 0..n {
        for j in 0..n {
            if i != j && q[(i, j)] < 0.0 {
                push(
                    Invariant::GeneratorOffDiagonal,
                    format!("generator off-diagonal entry ({i},{j}) = {} is negative", q[(i, j)]),
                );
            }
        }
        let s: f64 = q.row(i).iter().sum();
        if s.abs() > STRUCTURE_TOL {
            push(
                Invariant::GeneratorRowSum,
                format!("generator row {i} sums to {s:e}, not 0"),
            );
        }
    }

    for (x, &f) in spec.running_cost.iter().enumerate() {
        if f > 0.0 {
            push(
                Invariant::RunningCostSign,
                format!("running_cost must be nonpositive at {x} (got {f}); normalize first"),
            );
        }
    }

    let u = &spec.impulse_set;
    if u.is_empty() {
        push(Invariant::ImpulseSetEmpty, "impulse_set is empty".into());
    }
    if u.windows(2).any(|w| w[0] >= w[1]) {
        push(
            Invariant::ImpulseSetOrder,
            "impulse_set must be strictly increasing in state order".into(),
        );
    }

    for x in 0..n {
        for j in 0..u.len() {
            let c = spec.cost(x, j);
            if c >= 0.0 {
                push(
                    Invariant::ShiftCostSign,
                    format!("shift_cost must be strictly negative at ({x},{j})"),
                );
            }
        }
    }

    // c(x, xi) >= c(x, eta) + c(eta, xi)
    for x in 0..n {
        for (xi_pos, _) in u.iter().enumerate() {
            for (eta_pos, &eta) in u.iter().enumerate() {
                let direct = spec.cost(x, xi_pos);
                let chained = spec.cost(x, eta_pos) + spec.cost(eta, xi_pos);
                if direct < chained - STRUCTURE_TOL {
                    push(
                        Invariant::TriangleInequality,
                        format!(
                            "triangle inequality fails for x={x}, xi={}, eta={eta}: {direct} < {chained}",
                            u[xi_pos]
                        ),
                    );
                }
            }
        }
    }

    let chain = &spec.exhaustion_chain;
    if chain.is_empty() {
        push(Invariant::ChainEmpty, "exhaustion_chain is empty".into());
    } else {
        for (m, pair) in chain.windows(2).enumerate() {
            let strict = pair[0].len() < pair[1].len() && pair[0].iter().all(|i| pair[1].contains(i));
            if !strict {
                push(
                    Invariant::ChainNesting,
                    format!("B_{m} is not a strict subset of B_{}", m + 1),
                );
            }
        }
        if let Some(&bad) = u.iter().find(|i| !chain[0].contains(i)) {
            push(
                Invariant::ImpulseSetOutsideBase,
                format!("impulse state {bad} is not in B_0"),
            );
        }
        if chain.last().map(Vec::len) != Some(n) {
            push(
                Invariant::ChainCoverage,
                format!("last exhaustion set must be the full state set of {n} states"),
            );
        }
        // escape from every bounded domain short of the last one
        let can_leave = |set: &[usize]| -> Vec<usize> {
            let mut inside = vec![false; n];
            for &i in set {
                inside[i] = true;
            }
            // backward reachability from the complement
            let mut reaches = inside.iter().map(|&b| !b).collect::<Vec<_>>();
            let mut changed = true;
            while changed {
                changed = false;
                for i in 0..n {
                    if !reaches[i] && (0..n).any(|j| j != i && q[(i, j)] > 0.0 && reaches[j]) {
                        reaches[i] = true;
                        changed = true;
                    }
                }
            }
            set.iter().copied().filter(|&i| !reaches[i]).collect()
        };
        for (m, set) in chain.iter().enumerate().take(chain.len() - 1) {
            let trapped = can_leave(set);
            if !trapped.is_empty() {
                push(
                    Invariant::Escape,
                    format!("escape from B_{m} impossible from states {trapped:?}"),
                );
            }
        }
    }

    let comps = linalg::strongly_connected_components(n, |i, j| i != j && q[(i, j)] > 0.0);
    if comps.len() > 1 {
        push(
            Invariant::Irreducible,
            format!(
                "generator is reducible: {} communicating classes {:?}",
                comps.len(),
                comps
            ),
        );
    }

    if spec.grid_levels.is_empty() || spec.grid_levels.windows(2).any(|w| w[0] >= w[1]) {
        push(
            Invariant::GridLevels,
            "grid_levels must be nonempty and strictly increasing".into(),
        );
    }
    out
}

/// Shifts a raw running reward by its sup-norm so that it becomes
/// nonpositive. Returns the shifted array and the offset that was removed.
pub fn normalize_running_cost(raw: &[f64]) -> Result<(Vec<f64>, f64)> {
    if let Some(index) = raw.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "running_cost",
            index,
        });
    }
    let offset = sup_norm(raw);
    Ok((raw.iter().map(|x| x - offset).collect(), offset))
}
