//! WebAssembly bindings for the demo page in `www/`.
//!
//! Everything crosses the boundary as flat numeric arrays so the functions
//! are equally callable (and testable) from native Rust.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use knng::partition::random_division;
use knng::theory::{combined_lower_bound, multi_tree_prob, new_discovery_prob};
use knng::{brute_force_graph, graph_accuracy, BuildConfig, Builder, Dataset, DivisionConfig, Metric};

fn err(e: knng::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn planar(points: &[f64]) -> Result<Dataset, knng::Error> {
    Dataset::new(points.to_vec(), 2, Metric::Euclidean)
}

/// `n` points of a 2-D Gaussian mixture as `[x0, y0, x1, y1, ...]`.
#[wasm_bindgen]
pub fn mixture(n: usize, clusters: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    knng::synth::gaussian_mixture_points(n, 2, clusters, seed).map_err(err)
}

/// Leaf index of every point under one random division.
#[wasm_bindgen]
pub fn division_labels(points: &[f64], leaf_size: usize, seed: u64) -> Result<Vec<u32>, JsError> {
    let dataset = planar(points).map_err(err)?;
    let cfg = DivisionConfig {
        leaf_size,
        seed,
        ..DivisionConfig::default()
    };
    cfg.validate().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let division = random_division(&dataset, &cfg, &mut rng).map_err(err)?;
    Ok(division.labels(dataset.n()))
}

/// Runs `divisions` divisions and then one propagation pass, scoring the
/// graph after each step. Returns `[accuracy, effective_rate]` per division
/// followed by `[accuracy_after_propagation, propagation_seconds]`.
#[wasm_bindgen]
pub fn build_curve(
    points: &[f64],
    k: usize,
    leaf_size: usize,
    divisions: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let dataset = planar(points).map_err(err)?;
    let exact = brute_force_graph(&dataset, k).map_err(err)?;
    let cfg = BuildConfig::new(k).with_seed(seed).with_leaf_size(leaf_size);
    let mut builder = Builder::new(&dataset, cfg).map_err(err)?;
    let mut out = Vec::with_capacity(2 * divisions + 2);
    for _ in 0..divisions {
        let rate = builder.run_division().map_err(err)?.effective_rate;
        out.push(graph_accuracy(builder.graph(), &exact).map_err(err)?);
        out.push(rate);
    }
    let seconds = builder.propagate().wall_time;
    out.push(graph_accuracy(builder.graph(), &exact).map_err(err)?);
    out.push(seconds);
    Ok(out)
}

/// Directed edges `[from, to, ...]` of the graph after `divisions` divisions,
/// with or without the propagation pass.
#[wasm_bindgen]
pub fn graph_edges(
    points: &[f64],
    k: usize,
    leaf_size: usize,
    divisions: usize,
    propagate: bool,
    seed: u64,
) -> Result<Vec<u32>, JsError> {
    let dataset = planar(points).map_err(err)?;
    let cfg = BuildConfig::new(k).with_seed(seed).with_leaf_size(leaf_size);
    let mut builder = Builder::new(&dataset, cfg).map_err(err)?;
    for _ in 0..divisions {
        builder.run_division().map_err(err)?;
    }
    if propagate {
        builder.propagate();
    }
    Ok(builder.graph().edges().flat_map(|(u, v)| [u, v]).collect())
}

/// For `L = 1..=l_max`: `[multi_tree, new_discovery, combined_bound]` per row.
#[wasm_bindgen]
pub fn theory_curves(p: f64, h: u32, l_max: u32) -> Vec<f64> {
    (1..=l_max)
        .flat_map(|l| {
            [
                multi_tree_prob(p, h, l),
                new_discovery_prob(p, h, l),
                combined_lower_bound(p, h, l),
            ]
        })
        .collect()
}
