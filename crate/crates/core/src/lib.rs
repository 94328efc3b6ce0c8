//! Estimation of low-rank principal eigenmatrices of symmetric operators
//! with the matricized rank-truncated power method.

pub mod covgen;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod solver;
pub mod symmetric;
pub mod tensorops;
pub mod theory;

pub use error::{Error, Result};
pub use symmetric::SymmetricMatrix;
pub use tensorops::{
    matricize, project_kron, rank_truncate, rank_truncate_full, rank_truncate_vec, spectral_norm,
    vectorize, EigenMatrix, ProjectionPair, RankTruncation, Shape,
};
pub use theory::{theorem_constants, TheoremConstants};
