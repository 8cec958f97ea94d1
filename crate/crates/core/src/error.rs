use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid orientation: {0}")]
    InvalidOrientation(String),

    #[error("empty search grid: {0}")]
    EmptyGrid(&'static str),

    #[error("coincident positions: {0}")]
    CoincidentPositions(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(
        "scatterer placement failed after {attempts} attempts ({placed} of {requested} placed)"
    )]
    PlacementFailed {
        attempts: usize,
        placed: usize,
        requested: usize,
    },

    #[error("invalid tag: {0}")]
    InvalidTag(String),

    #[error("invalid state pair `{0}`")]
    InvalidStatePair(String),

    #[error("invalid detector input: {0}")]
    Detector(String),

    #[error("invalid map grid: {0}")]
    InvalidGrid(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("missing channel state `{0}`")]
    MissingState(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
