//! Dynamics of one and two qubits coupled transversally to classical noise,
//! either random telegraph (RTN) or Ornstein-Uhlenbeck (OU). Exact transfer
//! matrices for RTN, Monte Carlo propagation for both, entanglement and
//! discord for two-qubit states, and trace-distance / entanglement-flow
//! measures of information backflow.

pub mod bloch;
pub mod correlations;
pub mod montecarlo;
pub mod noise;
pub mod nonmarkov;
pub mod numeric;
pub mod run;
pub mod transfer;

pub use bloch::*;

/// Physicality tolerance: eigenvalues above -EPS_TOL and unit trace within
/// EPS_TOL count as a valid state.
pub const EPS_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("nonphysical density matrix: {0}")]
    NonPhysical(String),
    #[error("correlation matrix is not symmetric (asymmetry {0:.3e})")]
    AsymmetricCorrelation(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("did not converge: {0}")]
    Unconverged(String),
    #[error("nearly degenerate transfer exponents (min gap {0:.3e})")]
    DegenerateRoots(f64),
}
