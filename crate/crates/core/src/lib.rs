//! Density-matrix simulation of convex combinations of quantum channels.
//!
//! The crate is organised around a small dense-matrix kernel ([`qops`]) and
//! builds on it in layers:
//!
//! - [`channels`]: Kraus channels, convex mixtures, Stinespring dilations and
//!   standard noise models.
//! - [`circuit`]: a circuit IR with value-controlled gates, a density-matrix
//!   simulator, the deterministic mixture circuit (coefficient register +
//!   controlled dilations), the quantum-forking comparator, a compiler to
//!   CNOT + single-qubit gates and resource counting.
//! - [`pec`]: quasiprobability decompositions, exact error cancellation,
//!   Monte Carlo estimation, the sign split and the hybrid protocol that
//!   absorbs a block of layers into mixture circuits.
//! - [`lindblad`]: damped Rabi evolution by exact propagation, trajectory
//!   sampling and repeated mixture circuits.
//!
//! Everything is dense and capped at [`MAX_DIM`] (twelve qubits).

pub mod channels;
pub mod circuit;
pub mod error;
pub mod json;
pub mod lindblad;
pub mod pec;
pub mod qops;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Largest Hilbert-space dimension any operator or state may have.
pub const MAX_DIM: usize = 1 << 12;

/// Hermiticity and unit-trace tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalue floor accepted as "positive" for states and Choi matrices.
pub const EIGEN_FLOOR: f64 = -1e-9;

/// Crate version, recorded in experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
