use reclink::corpus::CorpusError;
use reclink::encoding::EncodingError;
use reclink::pipeline::PipelineError;
use reclink::scorer::ScorerError;
use reclink::synthgen::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("remote encoder: {0}")]
    Remote(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Divergence(_) => 3,
            CliError::Remote(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn remote_failure(e: &EncodingError) -> bool {
    matches!(
        e,
        EncodingError::Unreachable { .. }
            | EncodingError::Service { .. }
            | EncodingError::Protocol(_)
            | EncodingError::DimensionMismatch { .. }
    )
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Invalid(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncodingError> for CliError {
    fn from(e: EncodingError) -> Self {
        if remote_failure(&e) {
            CliError::Remote(e.to_string())
        } else if matches!(e, EncodingError::Config(_)) {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ScorerError> for CliError {
    fn from(e: ScorerError) -> Self {
        match &e {
            _ if e.is_divergence() => CliError::Divergence(e.to_string()),
            ScorerError::Encoding { source, .. } if remote_failure(source) => CliError::Remote(e.to_string()),
            ScorerError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Scorer(e) => e.into(),
            PipelineError::Encoding(e) => e.into(),
            PipelineError::Corpus(e) => e.into(),
            PipelineError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
