//! Inputs shared by the benchmarks.

use nalgebra::DMatrix;
use sigsel_core::{generate_synthetic, Dataset, GeneratorConfig};

/// Default synthetic corpus with a fixed seed.
pub fn corpus() -> Dataset {
    generate_synthetic(&GeneratorConfig::default(), 2024)
        .expect("default generator config is valid")
        .0
}

/// First `rows` genuine signatures of user `user` as a matrix.
pub fn genuine_matrix(ds: &Dataset, user: usize, rows: usize) -> DMatrix<f64> {
    let idx = &ds.genuine_of(user)[..rows];
    DMatrix::from_fn(rows, ds.feature_count(), |i, j| ds.sample(idx[i]).features[j])
}
