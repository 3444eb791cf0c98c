use thiserror::Error;

/// Errors produced by the mesh, solver and driver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate element {element}: {msg}")]
    Geometry { element: usize, msg: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("non-finite value encountered: {0}")]
    Numerical(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    Location { x: f64, y: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
