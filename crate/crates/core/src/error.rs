use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid panel: {0}")]
    Validation(String),

    #[error("duplicate row for unit `{unit}`, period `{period}`, outcome `{outcome}`")]
    DuplicateRow {
        unit: String,
        period: String,
        outcome: String,
    },

    #[error("unit `{0}` not found in panel")]
    UnknownUnit(String),

    #[error("all pre-treatment values missing for unit `{unit}`, outcome `{outcome}`")]
    EmptyPreTreatment { unit: String, outcome: String },

    #[error("outcome `{0}` has zero pre-treatment variance")]
    ZeroVariance(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("target lies outside the donor convex hull (distance {distance:.3e})")]
    Infeasible { distance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by user-supplied data or settings.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
