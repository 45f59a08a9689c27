use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

/// Errors raised by model loading, the numerical layers and the run orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model parse error{}: {message}", location(*line, *column))]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },

    #[error("unknown state label `{label}` in `{field}`")]
    UnknownState { field: String, label: String },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("model failed validation:\n{}", render_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("weighted kernel overflow: delta * (|f| + |shift|) = {magnitude:e} produced non-finite entries")]
    KernelOverflow { magnitude: f64 },

    #[error("resolvent requires r(g) < a < 0, got r(g) = {type_bound}, a = {a}")]
    ResolventPrecondition { type_bound: f64, a: f64 },

    #[error("singular linear system (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("nonpositive entry {value} at state {state}")]
    NonPositive { state: usize, value: f64 },

    #[error("power iteration did not converge after {iterations} iterations; last Collatz-Wielandt bracket [{lower}, {upper}]")]
    NonConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },

    #[error("power iteration stalled at iteration {iterations}: spread {spread:e} has not improved for {window} steps (bracket [{lower}, {upper}])")]
    Stalled {
        iterations: usize,
        window: usize,
        spread: f64,
        lower: f64,
        upper: f64,
    },

    #[error("eigenvector lost positivity at state {state} (possible reducibility or degeneracy)")]
    Positivity { state: usize },

    #[error("value iteration did not converge in {sweeps} sweeps (last change {change:e}); the stopping problem looks degenerate")]
    StoppingNonConvergence { sweeps: usize, change: f64 },

    #[error("degenerate problem: lambda = {lambda} is within {margin:e} of r(f) = {r_f}")]
    Degenerate { lambda: f64, r_f: f64, margin: f64 },

    #[error("ladder not monotone at k = {k}: lambda[m={m}] = {lower} > lambda[m={next}] = {upper}")]
    LadderNotMonotone {
        k: u32,
        m: usize,
        next: usize,
        lower: f64,
        upper: f64,
    },

    #[error("policy enumeration needs {count} evaluations, above the cap of {cap}")]
    EnumerationCap { count: f64, cap: u64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("solve at (m = {m}, k = {k}) failed: {source}")]
    AtLevel {
        m: usize,
        k: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed run artifact {}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_level(self, m: usize, k: u32) -> Self {
        Error::AtLevel {
            m,
            k,
            source: Box::new(self),
        }
    }
}
