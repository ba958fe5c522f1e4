//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("junction `{0}` has no open path to any reservoir")]
    Disconnected(String),
    #[error("solver did not converge in {iterations} iterations (residual {residual:.3e} m3/s)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("unknown pipe `{0}`")]
    UnknownPipe(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("series too short: {len} points, need at least 2 x period = {}", 2 * period)]
    SeriesTooShort { len: usize, period: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("buffer not full: {have} of {need} entries")]
    BufferNotFull { have: usize, need: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NaNLoss { epoch: usize, batch: usize },
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed data: {0}")]
    MalformedData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach the stream step at which the error occurred.
    pub fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
