//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building geometry or running solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: wrong lengths, non-finite data, bad ranges.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A curve handed in as unit-speed is not, within the chord tolerance.
    #[error("unit-speed violation at node {node}: chord ratio {ratio:.3e} outside [1-{tol:.1e}, 1]")]
    UnitSpeed { node: usize, ratio: f64, tol: f64 },

    /// The tube degenerates: the Jacobian h reaches zero or below.
    #[error("inadmissible tube: h = {h:.6e} at s-node {s_node}, transverse node {t_node}")]
    InadmissibleGeometry { s_node: usize, t_node: usize, h: f64 },

    /// Mask cross-sections must be 4-connected.
    #[error("cross-section mask is disconnected")]
    DisconnectedMask,

    /// Cross-section too coarse or empty after discretisation.
    #[error("degenerate cross-section: {0}")]
    DegenerateSection(String),

    /// The tube radius violates a smallness threshold; names the threshold.
    #[error("epsilon {eps:.4e} exceeds {limit:.4e}: {context}")]
    EpsilonTooLarge { eps: f64, limit: f64, context: String },

    /// Direct linear algebra failed (e.g. a matrix expected to be positive
    /// definite is not at the requested shift).
    #[error("linear solver failure: {0}")]
    Solver(String),

    /// An iterative solver hit its cap before reaching tolerance.
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    /// Text table or JSON input could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Filesystem problems while reading or emitting reports.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
