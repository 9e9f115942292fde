use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("dimension {0} exceeds the dense cap of {max}", max = crate::MAX_DIM)]
    TooLarge(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (residual {0:.3e})")]
    NotUnitary(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid subsystem selection: {0}")]
    InvalidSubsystems(String),

    #[error("channel has no Kraus operators")]
    EmptyChannel,

    #[error("channel `{label}` is not CPTP (tp residual {tp_residual:.3e}, Choi min eigenvalue {choi_min_eig:.3e})")]
    NotCptp {
        label: String,
        tp_residual: f64,
        choi_min_eig: f64,
    },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },

    #[error("register layout uses {0} qubits, more than the cap of 12")]
    RegisterCap(usize),

    #[error("malformed circuit item {index}: {reason}")]
    MalformedItem { index: usize, reason: String },

    #[error("circuit is not compiled: item {index} ({name}) is not CNOT or single-qubit")]
    NotCompiled { index: usize, name: String },

    #[error("channel item {index} ({name}) cannot be compiled; dilate it first")]
    ChannelInCompile { index: usize, name: String },

    #[error("basis cannot represent the target: residual {residual:.3e} > tol {tol:.3e}")]
    BasisIncomplete { residual: f64, tol: f64 },

    #[error("enumeration of {count} tuples exceeds the guard of {limit}")]
    EnumerationGuard { count: u128, limit: u128 },

    #[error("absorbed layers must be a contiguous block within 0..{layers}: {reason}")]
    InvalidBlock { layers: usize, reason: String },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}
