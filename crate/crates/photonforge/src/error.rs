use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("result of hilbert_dim({photons}, {modes}) overflows the machine word")]
    DimensionOverflow { photons: usize, modes: usize },

    #[error("{photons} photons cannot occupy {modes} modes")]
    InvalidModeCount { photons: usize, modes: usize },

    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("photon number mismatch: {left} vs {right}")]
    PhotonMismatch { left: usize, right: usize },

    #[error("matrix dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("state vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("duplicate state {state} in basis")]
    DuplicateState { state: String },

    #[error("basis mismatch: operator input basis differs from state basis")]
    BasisMismatch,

    #[error("resource guard exceeded: {quantity} = {value} > {limit}")]
    ResourceGuard {
        quantity: &'static str,
        value: u128,
        limit: u128,
    },

    #[error("state {state} matches no row of gate table {table} (photon leakage)")]
    GateInputRejected { state: String, table: String },

    #[error("block size q={q} below validity range of {sub_op} (requires q >= {min_q})")]
    BlockSizeTooSmall {
        sub_op: &'static str,
        q: usize,
        min_q: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("record verification failed: {0}")]
    VerifyFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
