use thiserror::Error;

/// Errors produced by the generators, detectors, estimators and decoders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("every column was deleted (K_n = 0)")]
    AllColumnsDeleted,

    #[error("need at least {needed} columns, got {got}")]
    TooFewColumns { needed: usize, got: usize },

    /// The running distances do not look like a two-component mixture.
    #[error("degenerate binomial mixture: {0}")]
    DegenerateMixture(String),

    #[error("alphabet of size {0} is too large for a remapping sweep")]
    AlphabetTooLarge(usize),

    /// A column of the deviation matrix had more than one outlier.
    #[error("deletion misdetection in retained column {column}: {count} outliers")]
    Misdetection { column: usize, count: usize },

    #[error("no useful remapping found among {tried} candidates")]
    NoUsefulRemapping { tried: usize },

    #[error("inconsistent detection: {runs} replica runs but {retained} retained columns")]
    InconsistentDetection { runs: usize, retained: usize },

    #[error("cell budget exceeded: {cells} cells > {budget}")]
    CellBudgetExceeded { cells: u128, budget: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// True for failures of a detection algorithm on a valid input, as opposed
    /// to malformed input.
    pub fn is_algorithmic(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMixture(_)
                | Error::Misdetection { .. }
                | Error::NoUsefulRemapping { .. }
                | Error::InconsistentDetection { .. }
                | Error::AllColumnsDeleted
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
