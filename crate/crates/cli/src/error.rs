use omniflow::audio::AudioError;
use omniflow::conditioning::ConditioningError;
use omniflow::dataforge::DataforgeError;
use omniflow::diffsub::DiffError;
use omniflow::evalkit::EvalError;
use omniflow::flowdit::FlowError;
use omniflow::spectral::SpectralError;
use serde_json::json;
use thiserror::Error;

/// A failed command, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        json!({"error": self.kind(), "code": self.exit_code(), "message": self.to_string()}).to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::InvalidParameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidConfig(_) | SpectralError::EmptyFilter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DiffError> for CliError {
    fn from(e: DiffError) -> Self {
        match e {
            DiffError::NonFinite(_) | DiffError::NonFiniteGradient(_) => CliError::Numerical(e.to_string()),
            DiffError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ConditioningError> for CliError {
    fn from(e: ConditioningError) -> Self {
        match e {
            ConditioningError::InvalidParameter(_) => CliError::Config(e.to_string()),
            ConditioningError::NonFinite => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::NonFiniteLoss { .. } | FlowError::InvalidLatent => CliError::Numerical(e.to_string()),
            FlowError::InvalidConfig(_) | FlowError::Width { .. } => CliError::Config(e.to_string()),
            FlowError::Diff(d) => d.into(),
            FlowError::Conditioning(c) => c.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DataforgeError> for CliError {
    fn from(e: DataforgeError) -> Self {
        match e {
            DataforgeError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NonFinite => CliError::Numerical(e.to_string()),
            EvalError::Spectral(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
