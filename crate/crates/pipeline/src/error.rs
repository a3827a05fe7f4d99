use ciresdiff_core::CoreError;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error:\n{0}")]
    Config(String),

    #[error("missing upstream artifact for stage {stage}: {path}")]
    MissingArtifact { stage: String, path: PathBuf },

    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("split leakage: sample {0} is in the test split")]
    SplitLeakage(usize),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    /// Process exit codes: 2 validation, 3 missing upstream artifact,
    /// 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::SplitLeakage(_) => 2,
            PipelineError::MissingArtifact { .. } => 3,
            PipelineError::Numeric { .. } => 4,
            PipelineError::Core(CoreError::NonFinite(_)) => 4,
            PipelineError::Core(CoreError::Io { source, .. })
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                3
            }
            PipelineError::Core(_) | PipelineError::Other(_) => 2,
        }
    }
}
