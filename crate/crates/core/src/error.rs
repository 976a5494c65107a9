use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation too close to a pole: |denominator| = {magnitude:e} at k a = {z}")]
    PoleProximity { z: String, magnitude: f64 },

    #[error("root finder failed: {0}")]
    RootFinding(String),

    #[error("pole certification failed: {0}")]
    Certification(String),

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds tolerance {tolerance:e} ({context})")]
    NonConvergence {
        estimate: f64,
        tolerance: f64,
        context: String,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("data validation failed: {0}")]
    Data(String),

    #[error("absorber reflection {0:e} exceeds the 1e-5 budget")]
    AbsorberReflection(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::RootFinding(_)
                | Error::Certification(_)
                | Error::PoleProximity { .. }
                | Error::Fit(_)
                | Error::AbsorberReflection(_)
        )
    }
}
