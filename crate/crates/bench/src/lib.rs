//! Fixtures shared by the benchmarks.

use dpam::{ComponentClass, Dataset, ProxProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A univariate problem on `k` sorted uniform knots with noisy step targets.
pub fn prox_problem(k: usize, rho: f64, class: ComponentClass, seed: u64) -> ProxProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut knots: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let targets = knots
        .iter()
        .map(|t| if *t > 0.5 { 1.0 } else { 0.0 } + 0.3 * (rng.random::<f64>() - 0.5))
        .collect();
    ProxProblem::unweighted(targets, knots, rho, class).expect("valid problem")
}

/// `n x p` uniform design; the first two covariates carry a step and a ramp.
pub fn additive_data(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ndarray::Array2::from_shape_fn((n, p), |_| rng.random::<f64>());
    let y = (0..n)
        .map(|i| {
            let step = if x[[i, 0]] > 0.5 { 1.0 } else { -1.0 };
            let ramp = if p > 1 { x[[i, 1]] } else { 0.0 };
            step + ramp + 0.5 * (rng.random::<f64>() - 0.5)
        })
        .collect();
    Dataset::new(x, y).expect("valid data")
}
