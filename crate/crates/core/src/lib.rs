//! Distributed compressive sensing at desk scale.
//!
//! A signal ensemble `x_1, ..., x_J` is jointly sparse when it factors as
//! `X = P * Theta` for a location matrix `P` built from identity submatrices
//! (a common block shared by every sensor plus one innovation block per
//! sensor) and a short value vector `Theta`. Each sensor takes a handful of
//! random Gaussian measurements `y_j = Phi_j * x_j` on its own; a joint
//! decoder at the collection point recovers the whole ensemble from far
//! fewer measurements than separate per-signal recovery would need.
//!
//! The crate is organized around that pipeline:
//!
//! - [`ensemble`]: joint sparsity models (JSM-1/2/3), location-matrix
//!   algebra, sparsity reduction, and seeded stochastic generation.
//! - [`bounds`]: overlap/conditional/joint sparsity accounting, the
//!   value-measurement bipartite graph, Hall-condition matching, and the
//!   per-subset measurement-bound checkers.
//! - [`solvers`]: numerical kernels — Gaussian matrices, weighted l1 via
//!   linear programming, least squares / QR / orthogonal complements, the
//!   combinatorial l0 oracle, and OMP.
//! - [`recovery`]: the joint decoders — cross-validation search,
//!   gamma-weighted l1 and the two-stage difference/average decoder for
//!   JSM-1, TP and DCS-SOMP for JSM-2, TECC and ACIE for JSM-3, plus
//!   separate-recovery baselines.
//! - [`experiments`]: a deterministic Monte Carlo harness that sweeps
//!   measurement grids, estimates success probabilities, and emits CSV.

pub mod bounds;
pub mod ensemble;
pub mod experiments;
pub mod recovery;
pub mod solvers;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum DcsError {
    #[error("invalid location matrix: {0}")]
    InvalidLocationMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instance too large: {0}")]
    SizeGuard(String),
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program solver failed: {0}")]
    LpFailure(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DcsError>;

/// Relative l2 error threshold below which a signal counts as perfectly
/// recovered, used uniformly across decoders and the experiment harness.
pub const SUCCESS_THRESHOLD: f64 = 1e-4;

/// Derive an independent RNG seed from a base seed and a list of indices
/// (sensor, grid cell, trial, ...) by chaining a splitmix64-style mixer.
/// Deterministic, and distinct index tuples give unrelated streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base;
    for &p in parts {
        state = state
            .wrapping_add(0x9e3779b97f4a7c15)
            .wrapping_add(p.wrapping_mul(0xbf58476d1ce4e5b9));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        state = z ^ (z >> 31);
    }
    state
}
