use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("outside of the support: {0}")]
    Domain(String),

    #[error("flow training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_check(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what}: expected {expected}, got {got}"
        )))
    }
}
