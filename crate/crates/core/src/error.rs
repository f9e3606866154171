//! Error type shared across the crate.

use thiserror::Error;

/// Errors reported by network ingestion, model construction, and solvers.
///
/// Solver non-convergence is deliberately *not* an error: iterative solvers
/// return their best iterate together with a status flag, so callers can
/// inspect partial results. Only structurally invalid inputs error out.
#[derive(Debug, Error)]
pub enum Error {
    /// A text input (TNTP or JSON) could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Two objects that must agree in size do not.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A positive-demand OD pair has no path in the network.
    #[error("no path from node {origin} to node {destination} with positive demand")]
    Disconnected { origin: usize, destination: usize },

    /// A network or model field violates its domain (negative demand,
    /// nonpositive capacity, dangling node index, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A run configuration is inconsistent (bad algorithm/parameter combination).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A leader decision lies outside its feasible set.
    #[error("infeasible leader decision: {0}")]
    Infeasible(String),

    /// A quantity whose definition divides by a total that is zero here
    /// (e.g. the relative gap at zero total cost).
    #[error("degenerate quantity: {0}")]
    Degenerate(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
