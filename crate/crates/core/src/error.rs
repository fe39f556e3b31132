use thiserror::Error;

/// Errors produced across parsing, estimation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text. `line` is 1-based within the offending stream.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// All camera-light offsets are zero; the scale cancels out of the model.
    #[error("degenerate baseline: scale is unobservable when every light sits at the optical center")]
    DegenerateBaseline,

    /// Both views coincide and observe the same intensity; every scale fits.
    #[error("degenerate motion: identical viewpoints with identical intensities constrain nothing")]
    DegenerateMotion,

    #[error("no positive real solution for the scale")]
    NoSolution,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular geometry: scene point coincides with a light source")]
    SingularGeometry,

    #[error("normal estimation failed for point {point_id}: {reason}")]
    NormalEstimation { point_id: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// True for errors meaning the data cannot determine the scale at all.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBaseline
                | Error::DegenerateMotion
                | Error::NoSolution
                | Error::InsufficientData(_)
                | Error::SingularGeometry
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
