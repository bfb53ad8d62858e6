//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, Metric};
use crate::error::{invalid, Result};

/// Half-width of the cube cluster centers are drawn from.
pub const CENTER_RANGE: f64 = 10.0;

/// `n` points from a standard `d`-dimensional Gaussian.
pub fn gaussian(n: usize, d: usize, seed: u64, metric: Metric) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Dataset::new(points, d, metric)
}

/// Row-major coordinates of a Gaussian mixture: `clusters` centers uniform in
/// `[-10, 10]^d`, unit-variance isotropic noise, uniform cluster assignment.
pub fn gaussian_mixture_points(n: usize, d: usize, clusters: usize, seed: u64) -> Result<Vec<f64>> {
    mixture_points(n, d, clusters, 1.0, seed)
}

/// Like [`gaussian_mixture_points`] with noise standard deviation `std`.
pub fn mixture_points(n: usize, d: usize, clusters: usize, std: f64, seed: u64) -> Result<Vec<f64>> {
    if clusters == 0 {
        return invalid("need at least one cluster");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..clusters * d)
        .map(|_| rng.gen_range(-CENTER_RANGE..CENTER_RANGE))
        .collect();
    let mut points = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.gen_range(0..clusters);
        for x in &centers[c * d..(c + 1) * d] {
            let noise: f64 = rng.sample(StandardNormal);
            points.push(x + std * noise);
        }
    }
    Ok(points)
}

/// [`gaussian_mixture_points`] wrapped as a dataset.
pub fn gaussian_mixture(
    n: usize,
    d: usize,
    clusters: usize,
    seed: u64,
    metric: Metric,
) -> Result<Dataset> {
    Dataset::new(gaussian_mixture_points(n, d, clusters, seed)?, d, metric)
}
