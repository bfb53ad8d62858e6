use std::collections::BTreeSet;

use knng::partition::division_rng;
use knng::{
    brute_force_graph, build_graph, graph_accuracy, random_division, synth, validate_graph,
    BuildConfig, Builder, Dataset, Metric,
};

fn scalar_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let t = a[i] - b[i];
        s += t * t;
    }
    s.sqrt()
}

#[test]
fn divisions_only_graph_is_top_k_of_colocated_pairs() {
    let ds = synth::gaussian_mixture(1500, 6, 8, 2, Metric::Euclidean).unwrap();
    let k = 7;
    let cfg = BuildConfig::new(k).with_leaf_size(120).with_propagation(false);
    let mut builder = Builder::new(&ds, cfg).unwrap();
    let mut candidates = vec![BTreeSet::new(); ds.n()];
    for i in 0..3 {
        let div = random_division(&ds, &cfg.division, &mut division_rng(9, i)).unwrap();
        for leaf in &div.leaves {
            for &a in leaf {
                for &b in leaf {
                    if a != b {
                        candidates[a as usize].insert(b);
                    }
                }
            }
        }
        builder.apply_division(&div).unwrap();
    }
    let graph = builder.graph();
    for (p, cands) in candidates.iter().enumerate() {
        let mut sorted: Vec<(f64, u32)> = cands
            .iter()
            .map(|&q| (scalar_euclidean(ds.point(p), ds.point(q as usize)), q))
            .collect();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        sorted.truncate(k);
        let got: Vec<(f64, u32)> = graph.list(p).entries().iter().map(|e| (e.dist, e.id)).collect();
        assert_eq!(got, sorted, "point {p}");
    }
    assert!(validate_graph(graph, &ds).is_empty());
}

#[test]
fn no_distance_is_computed_twice() {
    let ds = synth::gaussian(2000, 12, 4, Metric::Euclidean).unwrap();
    let cfg = BuildConfig::new(10).with_leaf_size(200).with_seed(1);
    ds.reset_kernel_calls();
    let mut builder = Builder::new(&ds, cfg).unwrap();
    builder.run().unwrap();
    assert!(builder.stats().propagation.is_some());
    let distinct = builder.cache().len();
    let (_, stats) = builder.finish();
    assert_eq!(ds.kernel_calls(), stats.cache_misses);
    assert_eq!(stats.cache_misses, distinct);
    assert!(distinct <= 2000 * 1999 / 2);
    let per_division: u64 = stats.divisions.iter().map(|d| d.distance_computations).sum();
    let prop = stats.propagation.as_ref().unwrap();
    assert_eq!(per_division + prop.distance_computations, ds.kernel_calls());
}

#[test]
fn whole_dataset_leaf_matches_brute_force() {
    for (seed, metric) in [(1, Metric::Euclidean), (2, Metric::Cosine)] {
        let ds = synth::gaussian(300, 5, seed, metric).unwrap();
        let cfg = BuildConfig::new(6).with_divisions(1).with_leaf_size(301).with_propagation(false);
        let (graph, _) = build_graph(&ds, &cfg).unwrap();
        assert_eq!(graph, brute_force_graph(&ds, 6).unwrap());
    }
}

#[test]
fn more_divisions_never_hurt() {
    let ds = synth::gaussian(2000, 10, 8, Metric::Euclidean).unwrap();
    let exact = brute_force_graph(&ds, 10).unwrap();
    let cfg = BuildConfig::new(10).with_leaf_size(150).with_seed(3).with_propagation(false);
    let (g4, _) = build_graph(&ds, &cfg.with_divisions(4)).unwrap();
    let (g8, _) = build_graph(&ds, &cfg.with_divisions(8)).unwrap();
    let (a4, a8) = (graph_accuracy(&g4, &exact).unwrap(), graph_accuracy(&g8, &exact).unwrap());
    assert!(a8 >= a4, "{a8} < {a4}");
}

#[test]
fn propagation_after_four_divisions_does_not_hurt() {
    let ds = synth::gaussian(2000, 10, 12, Metric::Euclidean).unwrap();
    let exact = brute_force_graph(&ds, 10).unwrap();
    let cfg = BuildConfig::new(10).with_leaf_size(150).with_seed(5);
    let mut builder = Builder::new(&ds, cfg).unwrap();
    for _ in 0..4 {
        builder.run_division().unwrap();
    }
    let before = graph_accuracy(builder.graph(), &exact).unwrap();
    builder.propagate();
    let after = graph_accuracy(builder.graph(), &exact).unwrap();
    assert!(after >= before, "{after} < {before}");
    assert!(after > before, "propagation found nothing ({before})");
    assert!(validate_graph(builder.graph(), &ds).is_empty());
}

#[test]
fn effective_rate_decays_on_average() {
    let mut mean = vec![0.0; 10];
    for seed in 0..5 {
        let ds: Dataset = synth::gaussian(5000, 16, 100 + seed, Metric::Euclidean).unwrap();
        let cfg = BuildConfig::new(10).with_seed(seed).with_propagation(false).with_divisions(10);
        let (_, stats) = build_graph(&ds, &cfg).unwrap();
        assert_eq!(stats.divisions[0].effective_rate, 1.0);
        for (m, rec) in stats.divisions.iter().enumerate() {
            mean[m] += rec.effective_rate / 5.0;
        }
    }
    assert!(mean[9] < mean[1], "{mean:?}");
}
