use alloc::string::String;

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two inputs that must share an index (days, maturities, calendars) do not.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A log transform met a value that is not strictly positive.
    #[error("non-positive value {value} at index {index}{}", date.map(|d| alloc::format!(" ({d})")).unwrap_or_default())]
    NonPositive {
        index: usize,
        date: Option<NaiveDate>,
        value: f64,
    },

    #[error("degenerate scale: interquartile range is zero")]
    DegenerateScale,

    #[error("singular least-squares design on row {row}")]
    SingularFit { row: usize },

    #[error("silhouette is undefined for a single cluster")]
    UndefinedSilhouette,

    #[error("R-squared is undefined for a constant target")]
    UndefinedR2,

    #[error("GKG parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("instant {0} lies outside the trading calendar")]
    OutOfCalendar(NaiveDateTime),

    /// A non-finite value appeared during a forward pass.
    #[error("non-finite activation at step {step}")]
    Divergence { step: usize },

    #[error("training diverged at epoch {epoch} (last finite loss {last_loss:?})")]
    TrainingDivergence { epoch: usize, last_loss: Option<f64> },

    #[error("training failed for rolling position {position}: {source}")]
    Rolling {
        position: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}
