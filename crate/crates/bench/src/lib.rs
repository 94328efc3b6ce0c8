//! Fixtures shared by the benchmarks.

use eigenmat::covgen::{random_rank_k_eigenmatrix, sample_gaussian, CovarianceSpec, Family, SampleSet};
use eigenmat::{EigenMatrix, Shape, SymmetricMatrix};

/// Spiked covariance at `p x p` with a rank-one truth and `lambda1 = 10`.
pub fn spiked(p: usize, seed: u64) -> SymmetricMatrix {
    let mut spec = CovarianceSpec::new(Family::Spiked, p * p, seed);
    spec.params.lambda1 = Some(10.0);
    spec.build().expect("valid spiked spec")
}

/// `n` draws from [`spiked`].
pub fn samples(p: usize, n: usize, seed: u64) -> SampleSet {
    sample_gaussian(&spiked(p, seed), n, seed).expect("PSD covariance")
}

/// Random unit matrix of rank `min(p1, p2)`.
pub fn full_rank(shape: Shape, seed: u64) -> EigenMatrix {
    eigenmat::solver::init_random(shape, seed).expect("nonzero draw")
}

pub fn low_rank(shape: Shape, k: usize, seed: u64) -> EigenMatrix {
    random_rank_k_eigenmatrix(shape, k, seed).expect("valid rank")
}
