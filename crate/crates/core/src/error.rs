use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) outside the graphon domain")]
    Domain { x: f64, y: f64 },

    #[error("size error: {0}")]
    Size(String),

    #[error("degree function vanishes at x = {x}; normalized kernel undefined")]
    SingularKernel { x: f64 },

    #[error("graphon assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("expected degree of node {node} is zero")]
    DegenerateDegree { node: usize },

    #[error("row {row} of the averaged kernel sums to zero")]
    ZeroRow { row: usize },

    #[error("cell quadrature did not converge (estimates {coarse} vs {fine})")]
    QuadratureFailure { coarse: f64, fine: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state blew up at t = {t} (|u| = {magnitude:e})")]
    BlowUp { t: f64, magnitude: f64 },

    #[error("{coarse} does not divide {fine}")]
    Divisibility { fine: usize, coarse: usize },

    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),

    #[error("graphon is not in L^{p}")]
    Integrability { p: u32 },

    #[error("matrix not symmetric at ({i}, {j})")]
    Asymmetry { i: usize, j: usize },

    #[error("weight {index} is not positive")]
    NonpositiveWeight { index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("adjacency not symmetric: edge ({i}, {j}) has no mirror")]
    SymmetryViolation { i: usize, j: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::SymmetryViolation { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Size(_)
                | Error::Divisibility { .. }
                | Error::Integrability { .. }
        )
    }
}
