use thiserror::Error;

/// Errors raised anywhere in the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("CFL condition violated (courant number {courant:.4}); use a time step of at most {suggested_dt:.6}")]
    Cfl { courant: f64, suggested_dt: f64 },

    #[error("lattice does not cover the reachable tube; required box lower={lower:?} upper={upper:?}")]
    OutOfLattice { lower: Vec<f64>, upper: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite {what}: {values:?}")))
    }
}
