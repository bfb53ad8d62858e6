use knng::partition::{division_rng, random_principal_direction, split_subset};
use knng::{random_division, synth, Dataset, DivisionConfig, Metric};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Angle between two lines through the origin, accurate for tiny angles.
fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (unit(a), unit(b));
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let s = dot.signum();
    let chord = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - s * y).powi(2))
        .sum::<f64>()
        .sqrt();
    2.0 * (chord / 2.0).min(1.0).asin()
}

/// Dominant eigenvector of the covariance of `rows`, via a dense solver.
fn covariance_top_eigenvector(rows: &[f64], d: usize) -> Vec<f64> {
    let n = rows.len() / d;
    let m = DMatrix::from_row_slice(n, d, rows);
    let mean = m.row_mean();
    let mut centered = m.clone();
    for mut r in centered.row_iter_mut() {
        r -= &mean;
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    eig.eigenvectors.column(top).iter().copied().collect()
}

fn anisotropic(n: usize, sigmas: &[f64], seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n * sigmas.len());
    for _ in 0..n {
        for s in sigmas {
            pts.push(s * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Dataset::new(pts, sigmas.len(), Metric::Euclidean).unwrap()
}

#[test]
fn sampled_direction_tracks_the_long_axis() {
    let cfg = DivisionConfig {
        pca_sample: 200,
        ..DivisionConfig::default()
    };
    let all: Vec<u32> = (0..2000).collect();
    let mut close = 0;
    for seed in 0..100 {
        let ds = anisotropic(2000, &[10.0, 1.0], seed);
        let oracle = covariance_top_eigenvector(ds.as_slice(), 2);
        assert!(line_angle(&oracle, &[1.0, 0.0]).to_degrees() < 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dir = random_principal_direction(&ds, &all, &cfg, &mut rng).unwrap();
        if line_angle(&dir, &oracle).to_degrees() <= 5.0 && line_angle(&dir, &[1.0, 0.0]).to_degrees() <= 5.0 {
            close += 1;
        }
    }
    assert!(close >= 99, "only {close}/100 directions within 5 degrees");
}

#[test]
fn full_sample_converges_to_the_dominant_eigenvector() {
    let ds = anisotropic(300, &[6.0, 3.0, 2.0, 1.0, 0.5, 0.25], 17);
    let all: Vec<u32> = (0..300).collect();
    let cfg = DivisionConfig {
        pca_sample: 300,
        power_iters: 400,
        ..DivisionConfig::default()
    };
    let oracle = covariance_top_eigenvector(ds.as_slice(), 6);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = random_principal_direction(&ds, &all, &cfg, &mut rng).unwrap();
        let err = line_angle(&dir, &oracle);
        assert!(err < 1e-6, "angular error {err}");
    }
}

#[test]
fn median_split_is_balanced() {
    let cfg = DivisionConfig::default();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1000 - (seed as usize % 2);
        let pts: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ds = Dataset::new(pts, 3, Metric::Euclidean).unwrap();
        let all: Vec<u32> = (0..n as u32).collect();
        let dir = random_principal_direction(&ds, &all, &cfg, &mut rng).unwrap();
        let (left, right) = split_subset(&ds, &all, &dir);
        let diff = left.len() as i64 - right.len() as i64;
        assert!((-1..=1).contains(&diff), "seed {seed}: {} vs {}", left.len(), right.len());
        let mut merged: Vec<u32> = left.iter().chain(&right).copied().collect();
        merged.sort_unstable();
        assert_eq!(merged, all);
    }
}

#[test]
fn leaves_partition_twenty_thousand_points() {
    let ds = synth::gaussian_mixture(20_000, 16, 50, 3, Metric::Euclidean).unwrap();
    let cfg = DivisionConfig::default();
    let div = random_division(&ds, &cfg, &mut division_rng(5, 0)).unwrap();
    let mut seen = vec![false; ds.n()];
    for leaf in &div.leaves {
        assert!(!leaf.is_empty() && leaf.len() < 500, "leaf of size {}", leaf.len());
        assert!(leaf.windows(2).all(|w| w[0] < w[1]));
        for &p in leaf {
            assert!(!seen[p as usize], "point {p} in two leaves");
            seen[p as usize] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn division_streams_are_distinct_and_reproducible() {
    let ds = synth::gaussian(3000, 8, 1, Metric::Euclidean).unwrap();
    let cfg = DivisionConfig {
        leaf_size: 100,
        ..DivisionConfig::default()
    };
    let divs: Vec<_> = (0..4)
        .map(|i| random_division(&ds, &cfg, &mut division_rng(42, i)).unwrap())
        .collect();
    for i in 0..divs.len() {
        for j in i + 1..divs.len() {
            assert_ne!(divs[i].labels(ds.n()), divs[j].labels(ds.n()));
        }
    }
    let again = random_division(&ds, &cfg, &mut division_rng(42, 2)).unwrap();
    assert_eq!(again, divs[2]);
    let other_seed = random_division(&ds, &cfg, &mut division_rng(43, 2)).unwrap();
    assert_ne!(other_seed.labels(ds.n()), divs[2].labels(ds.n()));
}
