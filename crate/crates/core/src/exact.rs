//! Exact ground truth and the accuracy metric.

use std::path::{Path, PathBuf};

use web_time::Instant;

use crate::builder::{build_graph, BuildConfig};
use crate::dataset::Dataset;
use crate::error::{invalid, Result};
use crate::graph::{KnnGraph, Neighbor};
use crate::io::graph_file;

/// Exact k-NN graph by exhaustive search, ties broken by ascending id.
pub fn brute_force_graph(dataset: &Dataset, k: usize) -> Result<KnnGraph> {
    let n = dataset.n();
    if k < 1 || k >= n {
        return invalid(format!("k must satisfy 1 <= k < n = {n}, got {k}"));
    }
    let mut graph = KnnGraph::new(n, k);
    for i in 0..n {
        let list = graph.list_mut(i);
        for j in 0..n {
            if j != i {
                list.insert(Neighbor::new(j as u32, dataset.kernel(i, j)));
            }
        }
        dataset.count_kernel_calls(n as u64 - 1);
    }
    Ok(graph)
}

/// Fraction of the exact graph's directed edges present in `approx`.
pub fn graph_accuracy(approx: &KnnGraph, exact: &KnnGraph) -> Result<f64> {
    if approx.n() != exact.n() || approx.k() != exact.k() {
        return invalid(format!(
            "graph shapes differ: n={} k={} vs n={} k={}",
            approx.n(),
            approx.k(),
            exact.n(),
            exact.k()
        ));
    }
    let (hits, total) = edge_overlap(approx, exact);
    if total == 0 {
        return invalid("exact graph has no edges");
    }
    Ok(hits as f64 / total as f64)
}

/// `(|E(approx) ∩ E(exact)|, |E(exact)|)` as integers.
pub fn edge_overlap(approx: &KnnGraph, exact: &KnnGraph) -> (u64, u64) {
    let mut hits = 0u64;
    let mut total = 0u64;
    for (a, e) in approx.lists().iter().zip(exact.lists()) {
        total += e.len() as u64;
        hits += e
            .entries()
            .iter()
            .filter(|x| a.contains(x.id))
            .count() as u64;
    }
    (hits, total)
}

/// One benchmark result row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub config_id: usize,
    pub max_divisions: usize,
    pub budget: usize,
    pub trigger: f64,
    pub k: usize,
    /// Divisions actually run before the trigger or cap.
    pub divisions_run: usize,
    pub propagation: bool,
    pub seconds: f64,
    pub accuracy: f64,
}

/// Builds with every config, timing each build and scoring it against `exact`.
pub fn bench_run(dataset: &Dataset, configs: &[BuildConfig], exact: &KnnGraph) -> Result<Vec<BenchRow>> {
    configs
        .iter()
        .enumerate()
        .map(|(config_id, cfg)| {
            if cfg.k != exact.k() {
                return invalid(format!(
                    "config {config_id} has k = {} but the exact graph has k = {}",
                    cfg.k,
                    exact.k()
                ));
            }
            let t0 = Instant::now();
            let (graph, stats) = build_graph(dataset, cfg)?;
            let seconds = t0.elapsed().as_secs_f64();
            Ok(BenchRow {
                config_id,
                max_divisions: cfg.max_divisions,
                budget: cfg.propagation_budget,
                trigger: cfg.trigger_threshold,
                k: cfg.k,
                divisions_run: stats.divisions_run(),
                propagation: stats.propagation.is_some(),
                seconds,
                accuracy: graph_accuracy(&graph, exact)?,
            })
        })
        .collect()
}

/// Path of the cached exact graph for `(digest, k, metric)` under `dir`.
pub fn exact_cache_path(dir: &Path, dataset: &Dataset, k: usize) -> PathBuf {
    dir.join(format!(
        "exact-{:016x}-k{k}-{}.knng",
        dataset.digest(),
        dataset.metric().name()
    ))
}

/// Loads the exact graph from `dir` if cached there, otherwise computes and
/// stores it. Returns the graph and whether it came from the cache.
pub fn exact_graph_cached(dataset: &Dataset, k: usize, dir: &Path) -> Result<(KnnGraph, bool)> {
    let path = exact_cache_path(dir, dataset, k);
    if path.exists() {
        let file = graph_file::load_graph_for(&path, dataset)?;
        if file.graph.k() == k {
            return Ok((file.graph, true));
        }
    }
    let graph = brute_force_graph(dataset, k)?;
    std::fs::create_dir_all(dir)?;
    graph_file::save_graph(&path, &graph, dataset.metric(), dataset.digest())?;
    Ok((graph, false))
}
