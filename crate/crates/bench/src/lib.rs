//! Shared fixtures for the benchmarks.

use distgp::simulation::{rng_for, LearningGenerator, MaternParams};
use distgp::{quantile_from_density, QuantileFunction};

/// `n` learning distributions as quantile functions on an `m`-point grid,
/// with their target values.
pub fn learning_inputs(n: usize, m: usize, seed: u64) -> (Vec<QuantileFunction>, Vec<f64>) {
    let gen = LearningGenerator::new(100, MaternParams::default()).expect("generator");
    (0..n as u64)
        .map(|i| {
            let g = gen.generate(&mut rng_for(seed, i)).expect("density").density;
            let q = quantile_from_density(&g, m).expect("quantiles");
            let y = distgp::simulation::target_f(&q);
            (q, y)
        })
        .unzip()
}
