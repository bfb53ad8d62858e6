//! Random hierarchical bisection of the point set along sampled principal
//! directions.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionConfig {
    /// Recursion stops once a subset has fewer than this many points.
    pub leaf_size: usize,
    /// Points sampled per subset to estimate its principal direction.
    pub pca_sample: usize,
    /// Power-iteration steps per direction.
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for DivisionConfig {
    fn default() -> Self {
        DivisionConfig {
            leaf_size: 500,
            pca_sample: 1000,
            power_iters: 20,
            seed: 0,
        }
    }
}

impl DivisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.leaf_size < 2 {
            return invalid(format!("leaf size must be >= 2, got {}", self.leaf_size));
        }
        if self.pca_sample < 2 {
            return invalid(format!("pca sample must be >= 2, got {}", self.pca_sample));
        }
        if self.power_iters < 1 {
            return invalid("power iteration budget must be >= 1");
        }
        Ok(())
    }
}

/// One random partition of `[0, n)` into leaves smaller than the leaf size.
/// Each leaf is sorted by ascending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Division {
    pub leaves: Vec<Vec<u32>>,
    pub depth: usize,
}

impl Division {
    /// Leaf index of every point.
    pub fn labels(&self, n: usize) -> Vec<u32> {
        let mut labels = vec![u32::MAX; n];
        for (leaf_id, leaf) in self.leaves.iter().enumerate() {
            for &p in leaf {
                labels[p as usize] = leaf_id as u32;
            }
        }
        labels
    }

    /// Number of unordered pairs that share a leaf.
    pub fn pair_count(&self) -> u64 {
        self.leaves
            .iter()
            .map(|l| {
                let s = l.len() as u64;
                s * s.saturating_sub(1) / 2
            })
            .sum()
    }
}

/// RNG for the `index`-th division of a build seeded with `seed`. Each
/// division gets its own ChaCha stream so divisions are reproducible alone.
pub fn division_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Approximates the dominant eigenvector of the covariance of a random
/// sample of `subset` by power iteration from a random unit start.
///
/// Returns `None` when every sampled point is identical (zero covariance).
pub fn random_principal_direction<R: Rng + ?Sized>(
    dataset: &Dataset,
    subset: &[u32],
    cfg: &DivisionConfig,
    rng: &mut R,
) -> Option<Vec<f64>> {
    let d = dataset.d();
    let s = subset.len().min(cfg.pca_sample);
    if s < 2 {
        return None;
    }
    let mut rows = Vec::with_capacity(s * d);
    if s == subset.len() {
        for &p in subset {
            rows.extend_from_slice(dataset.point(p as usize));
        }
    } else {
        for i in index::sample(rng, subset.len(), s) {
            rows.extend_from_slice(dataset.point(subset[i] as usize));
        }
    }

    let mut mean = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= s as f64;
    }
    let mut spread = 0.0;
    for row in rows.chunks_exact_mut(d) {
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
            spread += *x * *x;
        }
    }
    if spread == 0.0 {
        return None;
    }

    // Form X^T X when that is cheaper than two passes over the sample per step.
    let dense = s * d * (d + 1) / 2 + cfg.power_iters * d * d < cfg.power_iters * 2 * s * d;
    let scatter = if dense { scatter_matrix(&rows, d) } else { Vec::new() };

    let mut v = random_unit(d, rng);
    let mut w = vec![0.0; d];
    let mut iter = 0;
    while iter < cfg.power_iters {
        // w = (X^T X) v
        w.iter_mut().for_each(|x| *x = 0.0);
        if dense {
            for (acc, col) in w.iter_mut().zip(scatter.chunks_exact(d)) {
                *acc = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            }
        } else {
            for row in rows.chunks_exact(d) {
                let proj: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (acc, x) in w.iter_mut().zip(row) {
                    *acc += proj * x;
                }
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Start was orthogonal to the sample's span; draw again.
            v = random_unit(d, rng);
            iter += 1;
            continue;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        iter += 1;
    }
    Some(v)
}

fn scatter_matrix(rows: &[f64], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for row in rows.chunks_exact(d) {
        for (a, &xa) in row.iter().enumerate() {
            let line = &mut m[a * d..a * d + a + 1];
            for (acc, &xb) in line.iter_mut().zip(row) {
                *acc += xa * xb;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            m[b * d + a] = m[a * d + b];
        }
    }
    m
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Median split of `subset` along `direction`.
///
/// Points strictly below the median projection go left, strictly above go
/// right, and points equal to the median alternate left/right in ascending id
/// order. If every projection is equal the subset is halved by id, with the
/// extra point on the left. Both outputs are sorted by id.
pub fn split_subset(dataset: &Dataset, subset: &[u32], direction: &[f64]) -> (Vec<u32>, Vec<u32>) {
    let mut ids = subset.to_vec();
    ids.sort_unstable();
    let proj: Vec<f64> = ids
        .iter()
        .map(|&p| {
            dataset
                .point(p as usize)
                .iter()
                .zip(direction)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    split_by_projection(&ids, &proj)
}

/// Median split of already-projected ids (ascending id order).
pub(crate) fn split_by_projection(ids: &[u32], proj: &[f64]) -> (Vec<u32>, Vec<u32>) {
    let len = ids.len();
    let (lo, hi) = proj
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if len < 2 || lo == hi {
        let half = len.div_ceil(2);
        return (ids[..half].to_vec(), ids[half..].to_vec());
    }

    let mut sorted = proj.to_vec();
    let mid = len / 2;
    let (_, upper, _) = sorted.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if len % 2 == 1 {
        upper
    } else {
        let lower = sorted[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        lower + (upper - lower) / 2.0
    };

    let mut left = Vec::with_capacity(mid + 1);
    let mut right = Vec::with_capacity(mid + 1);
    let mut tie_left = true;
    for (&id, &x) in ids.iter().zip(proj) {
        if x < median {
            left.push(id);
        } else if x > median {
            right.push(id);
        } else {
            if tie_left {
                left.push(id);
            } else {
                right.push(id);
            }
            tie_left = !tie_left;
        }
    }
    (left, right)
}

/// Recursively bisects `[0, n)` until every subset is smaller than the leaf
/// size. Deterministic given the RNG state.
pub fn random_division<R: Rng + ?Sized>(
    dataset: &Dataset,
    cfg: &DivisionConfig,
    rng: &mut R,
) -> Result<Division> {
    cfg.validate()?;
    let mut leaves = Vec::new();
    let mut depth = 0;
    let mut stack: Vec<(Vec<u32>, usize)> = vec![((0..dataset.n() as u32).collect(), 0)];
    while let Some((subset, level)) = stack.pop() {
        if subset.len() < cfg.leaf_size {
            depth = depth.max(level);
            leaves.push(subset);
            continue;
        }
        let (left, right) = match random_principal_direction(dataset, &subset, cfg, rng) {
            Some(dir) => split_subset(dataset, &subset, &dir),
            None => {
                let half = subset.len().div_ceil(2);
                (subset[..half].to_vec(), subset[half..].to_vec())
            }
        };
        stack.push((right, level + 1));
        stack.push((left, level + 1));
    }
    Ok(Division { leaves, depth })
}
