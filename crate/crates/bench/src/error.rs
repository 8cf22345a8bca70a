use gnnlab_core::graph::GraphError;
use gnnlab_core::train::TrainError;
use gnnlab_core::zoo::ZooError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl BenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Data(_) => 3,
            BenchError::Divergence(_) => 4,
            BenchError::Io(_) => 1,
        }
    }
}

impl From<GraphError> for BenchError {
    fn from(e: GraphError) -> Self {
        BenchError::Data(e.to_string())
    }
}

impl From<ZooError> for BenchError {
    fn from(e: ZooError) -> Self {
        match e {
            ZooError::Config(_) => BenchError::Config(e.to_string()),
            _ => BenchError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for BenchError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => BenchError::Config(e.to_string()),
            TrainError::Divergence { .. } => BenchError::Divergence(e.to_string()),
            TrainError::Zoo(z) => z.into(),
            TrainError::EmptyMask(_) | TrainError::Graph(_) => BenchError::Data(e.to_string()),
        }
    }
}
