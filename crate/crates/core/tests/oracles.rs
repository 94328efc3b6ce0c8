//! Values computed outside this library.

use eigenmat::covgen::Family;
use eigenmat::experiment::{spectrum_instance, SpectrumMode};
use eigenmat::Shape;

// Top eigenvector of the AR(1) correlation with r = 0.9 from the
// tridiagonal inverse (scipy eigh_tridiagonal), matricized column-major,
// then a dense SVD.
const TOEPLITZ_SIGMA2: [(usize, f64); 3] = [
    (10, 0.0634389541870105),
    (20, 0.0412487095068626),
    (50, 0.01786241352172434),
];

#[test]
fn toeplitz_population_second_singular_value() {
    for (p, want) in TOEPLITZ_SIGMA2 {
        let s = spectrum_instance(Family::Toeplitz, Shape::square(p).unwrap(), SpectrumMode::Population, 2, 0).unwrap();
        let got = s[1] / s[0];
        assert!((got - want).abs() < 1e-9, "p = {p}: {got} vs {want}");
    }
}
