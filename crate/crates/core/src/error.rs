use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Probability reached the edge of the truncated momentum basis.
    #[error(
        "basis overflow at kick {kick}: edge occupation {edge_probability:.3e} exceeds \
         spill threshold {threshold:.3e}; increase the basis half-width (currently {half_width})"
    )]
    BasisOverflow {
        kick: usize,
        edge_probability: f64,
        threshold: f64,
        half_width: usize,
    },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("fit failed: {0}")]
    FitFailure(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
