use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("root not bracketed in [{lo:e}, {hi:e}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("cross spectrum violates Cauchy-Schwarz: |C| = {cross:e} > sqrt(Sz*Sx) = {bound:e}")]
    CauchySchwarz { cross: f64, bound: f64 },

    #[error("unidentifiable fit: {0}")]
    Unidentifiable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
