use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants split into two families: data errors (bad input files or
/// degenerate samples) and estimation errors (a smoother could not be
/// evaluated). [`Error::is_data_error`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric cell at row {row}, column `{col}`: {value:?}")]
    NonNumericCell { row: usize, col: String, value: String },

    #[error("empty cell at row {row}, column `{col}`")]
    EmptyCell { row: usize, col: String },

    #[error("treatment at row {row} is not 0 or 1: {value:?}")]
    NonBinaryTreatment { row: usize, value: String },

    #[error("treatment group {0} is empty")]
    EmptyGroup(u8),

    #[error("covariate `{0}` has zero variance")]
    DegenerateCovariate(String),

    #[error("inconsistent data: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient support: {effective_n} observations with positive weight, {required} required")]
    InsufficientSupport { effective_n: usize, required: usize },

    #[error("every bandwidth candidate failed on more than 5% of points")]
    AllCandidatesFailed,

    #[error("no near-frontier units in group {group} at epsilon = {epsilon}")]
    NoFrontierUnits { group: u8, epsilon: f64 },

    #[error("empty near-frontier sample")]
    EmptyFrontierSample,

    #[error("{dropped} of {total} grid points lacked support")]
    TooManyDroppedPoints { dropped: usize, total: usize },

    #[error("no unit has an identified treatment effect")]
    NoIdentifiedUnits,

    #[error("at least {required} points are needed, got {got}")]
    TooFewPoints { got: usize, required: usize },

    #[error("{discarded} of {draws} bootstrap draws were discarded")]
    TooManyDiscardedDraws { discarded: usize, draws: usize },

    #[error("skill covariance is not positive definite: {0}")]
    InvalidCovariance(String),
}

impl Error {
    /// True for errors caused by the input data rather than by estimation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Csv(_)
                | Error::MissingColumn(_)
                | Error::NonNumericCell { .. }
                | Error::EmptyCell { .. }
                | Error::NonBinaryTreatment { .. }
                | Error::EmptyGroup(_)
                | Error::DegenerateCovariate(_)
                | Error::Shape(_)
        )
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonNumericCell { .. } => "NonNumericCell",
            Error::EmptyCell { .. } => "EmptyCell",
            Error::NonBinaryTreatment { .. } => "NonBinaryTreatment",
            Error::EmptyGroup(_) => "EmptyGroup",
            Error::DegenerateCovariate(_) => "DegenerateCovariate",
            Error::Shape(_) => "Shape",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::InsufficientSupport { .. } => "InsufficientSupport",
            Error::AllCandidatesFailed => "AllCandidatesFailed",
            Error::NoFrontierUnits { .. } => "NoFrontierUnits",
            Error::EmptyFrontierSample => "EmptyFrontierSample",
            Error::TooManyDroppedPoints { .. } => "TooManyDroppedPoints",
            Error::NoIdentifiedUnits => "NoIdentifiedUnits",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::TooManyDiscardedDraws { .. } => "TooManyDiscardedDraws",
            Error::InvalidCovariance(_) => "InvalidCovariance",
        }
    }
}
