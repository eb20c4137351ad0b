use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("material `{material}`: wavelength {wavelength_nm:.3} nm outside table span [{min_nm:.3}, {max_nm:.3}] nm")]
    WavelengthOutOfRange {
        material: String,
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("computation error: {0}")]
    Computation(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.3e}); best parameters {best:?}")]
    FitNotConverged {
        iterations: usize,
        residual_norm: f64,
        best: Vec<(String, f64)>,
    },

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("infeasible design: {message}; best candidate {best:?} (constraint violation {violation:.3e})")]
    InfeasibleWithCandidate {
        message: String,
        best: Vec<(String, f64)>,
        violation: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            message: message.into(),
        }
    }
}
