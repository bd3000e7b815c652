use std::path::PathBuf;

use thiserror::Error;

use crate::cover::CellId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state became NaN or infinite during integration.
    #[error("blow-up: state became non-finite at t = {time}")]
    BlowUp { time: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Collocation grids grow like `resolution^d`; refuse to allocate past the cap.
    #[error("dimension explosion: {count} collocation points requested, cap is {cap}")]
    DimensionExplosion { count: u128, cap: usize },

    #[error(
        "calibration failed at center {center:?}: evolved diameter {diameter} exceeds \
         epsilon {epsilon} even at the minimum radius {floor}"
    )]
    CalibrationFailure {
        center: Vec<f64>,
        diameter: f64,
        epsilon: f64,
        floor: f64,
    },

    #[error("sample {point:?} is not covered by any input ball")]
    Uncovered { point: Vec<f64> },

    #[error("no sample lies inside any cell of the partition")]
    NoCoveredSamples,

    #[error("weights sum to {sum}, expected 1")]
    Unnormalized { sum: f64 },

    #[error("rejection sampling in cell {cell} failed: {accepted} of {wanted} samples after {attempts} attempts")]
    SamplingFailed {
        cell: CellId,
        accepted: usize,
        wanted: usize,
        attempts: usize,
    },

    #[error("integration from cell {cell} failed: {source}")]
    CellIntegration {
        cell: CellId,
        #[source]
        source: Box<Error>,
    },

    #[error("cell {cell} out of range 1..={n_cells}")]
    CellOutOfRange { cell: usize, n_cells: usize },

    #[error("nearest-neighbour radius r_n is undefined for a single segment")]
    SingleSegment,

    #[error("transition tensor of order {0} is missing")]
    MissingTensorOrder(usize),

    #[error("initial point {point:?} lies outside every cell")]
    StartOutsidePartition { point: Vec<f64> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    /// A persisted artifact parsed but violates one of its invariants.
    #[error("invalid artifact {context}: {reason}")]
    InvalidArtifact { context: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
