use thiserror::Error;

use crate::mesh::BoundaryLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("chart degeneracy: {0}")]
    ChartDegeneracy(String),

    #[error("point ({x}, {y}) lies outside the chart validity region")]
    OutsideChart { x: f64, y: f64 },

    #[error("degenerate element {0} (zero or negative area)")]
    DegenerateElement(usize),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("singular system: {0}")]
    Solvability(String),

    /// An iterative solver gave up; the last iterate is kept for checkpointing.
    #[error("solver did not converge: {message}")]
    NotConverged {
        message: String,
        last_iterate: Vec<f64>,
    },

    #[error("field transfer failed: {0}")]
    Transfer(String),

    #[error("boundary label {0:?} does not carry Dirichlet data")]
    NotDirichlet(BoundaryLabel),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
