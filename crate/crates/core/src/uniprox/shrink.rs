use crate::model::empirical_norm;

/// Group soft-thresholding `(1 - lambda / ||theta||_n)_+ theta`, where the
/// empirical norm uses `weights` (summing to the sample size). Returns an exact
/// zero vector once `||theta||_n <= lambda`.
pub fn group_shrink(theta: &[f64], weights: &[f64], lambda: f64) -> Vec<f64> {
    if theta.is_empty() || lambda <= 0.0 {
        return theta.to_vec();
    }
    let norm = empirical_norm(theta, Some(weights)).unwrap_or(0.0);
    if norm <= lambda {
        return vec![0.0; theta.len()];
    }
    let factor = 1.0 - lambda / norm;
    theta.iter().map(|v| factor * v).collect()
}
