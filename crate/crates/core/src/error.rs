use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(
        "{method} did not converge after {iterations} iterations \
         (estimate {estimate:e}, relative residual {residual:e})"
    )]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("degenerate family: {0}")]
    DegenerateFamily(String),

    #[error("lambda {lambda} lies outside the sub-exponential domain |lambda| <= {limit}")]
    Domain { lambda: f64, limit: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

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
