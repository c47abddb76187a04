use thiserror::Error;

/// Errors surfaced by the optimization library.
#[derive(Debug, Error)]
pub enum Error {
    /// Mesh or ground-structure construction failed.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// The assembled system has no restraint against rigid-body motion or a
    /// zero-stiffness degree of freedom.
    #[error("unrestrained structure: {0}")]
    UnrestrainedStructure(String),

    /// A linear solve did not reach the required residual.
    #[error("linear solver failure: {0}")]
    Solver(String),

    /// Operands with incompatible shapes.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// Invalid argument outside a dimension mismatch.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Sensitivity evaluation was handed displacements from a different batch.
    #[error("stale sample solution: batch {expected} but solution from {got}")]
    StaleBatch { expected: String, got: String },

    /// Lagrange-multiplier bisection could not bracket the volume constraint.
    #[error(
        "volume bisection not bracketable: volume in [{vol_hi:.6e}, {vol_lo:.6e}] \
         cannot reach target {target:.6e}"
    )]
    BisectionBracket {
        vol_lo: f64,
        vol_hi: f64,
        target: f64,
    },

    /// Problem-file validation failed; all findings are reported at once.
    #[error("problem validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    /// Problem-file syntax error.
    #[error("problem parse error: {0}")]
    Parse(String),

    /// Design export refused (for example an empty topology).
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Post-cleanup structure failed its equilibrium check.
    #[error("equilibrium violated after cleanup: {0}")]
    Equilibrium(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
