use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("MissingArtifact({stage:?}): {path} not found; run `lumirec {stage}` first")]
    MissingArtifact { stage: &'static str, path: String },
    #[error("config hash mismatch: {artifact} was written with config {found}, current config is {expected}")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    /// 1 for problems with the user's inputs, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingArtifact { .. } | CliError::HashMismatch { .. } => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(format!("csv: {e}"))
    }
}

/// Errors from the algorithms come from the data or parameters supplied.
impl From<lumirec_core::Error> for CliError {
    fn from(e: lumirec_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

macro_rules! core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::from(lumirec_core::Error::from(e))
            }
        }
    )*};
}

core_error!(
    lumirec_core::ingest::IngestError,
    lumirec_core::features::FeatureError,
    lumirec_core::clustering::ClusterError,
    lumirec_core::models::ModelError,
    lumirec_core::eval::EvalError,
    lumirec_core::synth::SynthError
);
