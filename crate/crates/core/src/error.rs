use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("field kind mismatch: {0}")]
    Kind(String),
    #[error("degenerate state: {0}")]
    Degenerate(String),
    #[error("expression error: {0}")]
    Expr(String),
    #[error("invalid closure on patch '{patch}': {msg}")]
    Closure { patch: String, msg: String },
    #[error("incompatible model: {0}")]
    Model(String),
    #[error("CFL violation: dt = {dt:.3e} exceeds bound {bound:.3e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
