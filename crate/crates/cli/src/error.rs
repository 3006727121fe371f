use mtlf_core::dataset::DatasetError;
use mtlf_core::ensemble::EnsembleError;
use mtlf_core::pipeline::PipelineError;
use mtlf_core::training::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    /// 2 config, 3 data, 4 numeric failure, 5 output I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
            Self::Output(_) => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Data(e.to_string())
    }
}

fn classify_train(e: &TrainError) -> fn(String) -> CliError {
    match e {
        TrainError::InvalidConfig(_) => CliError::Config,
        TrainError::TooShort { .. } | TrainError::EmptySubset | TrainError::UnknownSeries(_) => {
            CliError::Data
        }
        _ => CliError::Numeric,
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let kind: fn(String) -> CliError = match &e {
            PipelineError::Config(_) => CliError::Config,
            PipelineError::Stage { stage, .. } => match *stage {
                "holdout" | "normalize" | "evaluate" => CliError::Data,
                _ => CliError::Numeric,
            },
            PipelineError::Ensemble(inner) => match inner {
                EnsembleError::InvalidConfig(_) => CliError::Config,
                EnsembleError::EmptyCorpus => CliError::Data,
                EnsembleError::Replica { source, .. } => classify_train(source),
            },
        };
        kind(e.to_string())
    }
}
