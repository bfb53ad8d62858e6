//! Approximate k-nearest-neighbor graph construction.
//!
//! The builder repeatedly partitions the point set with random principal-direction
//! trees, brute-forces a neighborhood graph inside every leaf, and unites the
//! adjacency lists of all divisions. Once new divisions stop contributing new
//! candidate pairs (the effective rate falls below a threshold), a best-first
//! neighborhood propagation pass upgrades every list through its neighbors'
//! neighbors.
//!
//! ```
//! use knng::{build_graph, brute_force_graph, graph_accuracy, synth, BuildConfig, Metric};
//!
//! let dataset = synth::gaussian_mixture(600, 8, 6, 7, Metric::Euclidean).unwrap();
//! let cfg = BuildConfig::new(5).with_seed(11);
//! let (graph, stats) = build_graph(&dataset, &cfg).unwrap();
//! let exact = brute_force_graph(&dataset, 5).unwrap();
//! assert!(graph_accuracy(&graph, &exact).unwrap() > 0.9);
//! assert_eq!(stats.divisions[0].effective_rate, 1.0);
//! ```

pub mod builder;
pub mod cache;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod graph;
pub mod io;
pub mod partition;
pub mod propagation;
pub mod synth;
pub mod theory;

pub use builder::{
    build_graph, build_leaf_subgraph, effective_rate, pairwise_update, BuildConfig, BuildStats,
    Builder, DivisionRecord, PropagationRecord,
};
pub use cache::PairCache;
pub use dataset::{Dataset, Metric};
pub use error::{Error, Result};
pub use exact::{brute_force_graph, graph_accuracy, BenchRow};
pub use graph::{validate_graph, KnnGraph, Neighbor, NeighborList, Violation};
pub use partition::{random_division, Division, DivisionConfig};
pub use propagation::{propagate_all, propagate_point};
