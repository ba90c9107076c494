use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {num_qubits}-qubit state")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("gate {kind} needs distinct targets, got {a} twice")]
    DuplicateTargets { kind: &'static str, a: usize },

    #[error("gate {kind} takes {expected} target(s), got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("requested {0} qubits, the simulator is capped at {max}", max = crate::sim::MAX_QUBITS)]
    TooManyQubits(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("corrupted state: both outcomes of qubit {qubit} have probability below 1e-15")]
    CorruptedState { qubit: usize },

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("readout mitigation unavailable: confusion matrix for qubit {qubit} is singular (det = {det:.3e})")]
    MitigationUnavailable { qubit: usize, det: f64 },

    #[error("tomography set is missing basis pair {0}")]
    MissingBasis(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("device schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("missing calibration data: {0}")]
    MissingData(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
