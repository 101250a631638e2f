use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("decay fit failed: {0}")]
    Fit(String),

    #[error("numerical blow-up at t = {t}: state norm {norm:e}")]
    BlowUp { t: f64, norm: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

/// State norms above this are treated as divergence.
pub const BLOW_UP_NORM: f64 = 1e12;

pub(crate) fn check_blow_up(t: f64, norm: f64) -> Result<()> {
    if !norm.is_finite() || norm > BLOW_UP_NORM {
        return Err(Error::BlowUp { t, norm });
    }
    Ok(())
}
