//! Multiple random divide-and-conquer with a propagation trigger.

use web_time::Instant;

use crate::cache::PairCache;
use crate::dataset::Dataset;
use crate::error::{invalid, Result};
use crate::graph::{KnnGraph, Neighbor};
use crate::partition::{division_rng, random_division, Division, DivisionConfig};
use crate::propagation::Propagator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub k: usize,
    /// Cap on the number of random divisions.
    pub max_divisions: usize,
    /// Propagation starts once a division's effective rate drops below this.
    pub trigger_threshold: f64,
    /// Maximum number of points visited per point during propagation.
    pub propagation_budget: usize,
    pub division: DivisionConfig,
    pub enable_propagation: bool,
}

impl BuildConfig {
    pub const DEFAULT_MAX_DIVISIONS: usize = 20;
    pub const DEFAULT_TRIGGER: f64 = 0.05;

    /// Defaults for neighbor budget `k`: leaf size 500, trigger 0.05,
    /// budget `100 * k`, at most 20 divisions, propagation on.
    pub fn new(k: usize) -> Self {
        BuildConfig {
            k,
            max_divisions: Self::DEFAULT_MAX_DIVISIONS,
            trigger_threshold: Self::DEFAULT_TRIGGER,
            propagation_budget: 100 * k,
            division: DivisionConfig::default(),
            enable_propagation: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.division.seed = seed;
        self
    }

    pub fn with_divisions(mut self, m: usize) -> Self {
        self.max_divisions = m;
        self
    }

    pub fn with_leaf_size(mut self, g: usize) -> Self {
        self.division.leaf_size = g;
        self
    }

    pub fn with_propagation(mut self, enabled: bool) -> Self {
        self.enable_propagation = enabled;
        self
    }

    pub fn seed(&self) -> u64 {
        self.division.seed
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return invalid("k must be >= 1");
        }
        if self.max_divisions < 1 {
            return invalid("at least one division is required");
        }
        if !(self.trigger_threshold > 0.0 && self.trigger_threshold < 1.0) {
            return invalid(format!(
                "trigger threshold must lie in (0, 1), got {}",
                self.trigger_threshold
            ));
        }
        if self.propagation_budget < self.k {
            return invalid(format!(
                "propagation budget {} is smaller than k = {}",
                self.propagation_budget, self.k
            ));
        }
        self.division.validate()
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.division.leaf_size < 2 * self.k {
            out.push(format!(
                "leaf size {} is below 2k = {}; leaves cannot fill neighbor lists",
                self.division.leaf_size,
                2 * self.k
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionRecord {
    /// 1-based division index.
    pub index: usize,
    pub leaves: usize,
    pub depth: usize,
    pub new_pairs: u64,
    pub cumulative_pairs: u64,
    pub effective_rate: f64,
    pub wall_time: f64,
    pub distance_computations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationRecord {
    pub new_pairs: u64,
    pub cache_hits: u64,
    pub distance_computations: u64,
    pub visited: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub divisions: Vec<DivisionRecord>,
    /// Division after which the effective rate fell below the threshold.
    pub propagation_triggered_at: Option<usize>,
    pub propagation: Option<PropagationRecord>,
    pub propagation_budget: usize,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub wall_time: f64,
}

impl BuildStats {
    pub fn divisions_run(&self) -> usize {
        self.divisions.len()
    }

    pub fn division_time(&self) -> f64 {
        self.divisions.iter().map(|d| d.wall_time).sum()
    }
}

/// Effective rate of the `m`-th division (1-based).
pub fn effective_rate(stats: &BuildStats, m: usize) -> Result<f64> {
    if m == 0 || m > stats.divisions.len() {
        return invalid(format!(
            "division {m} out of range; {} divisions ran",
            stats.divisions.len()
        ));
    }
    Ok(stats.divisions[m - 1].effective_rate)
}

/// Offers `v` to `u`'s list and `u` to `v`'s list.
#[inline]
pub fn pairwise_update(graph: &mut KnnGraph, u: u32, v: u32, dist: f64) -> (bool, bool) {
    debug_assert_ne!(u, v);
    let a = graph.list_mut(u as usize).insert(Neighbor::new(v, dist));
    let b = graph.list_mut(v as usize).insert(Neighbor::new(u, dist));
    (a, b)
}

/// Brute-forces every pair inside `leaf`, routing distances through the cache.
pub fn build_leaf_subgraph(
    graph: &mut KnnGraph,
    dataset: &Dataset,
    leaf: &[u32],
    cache: &mut PairCache,
) -> Result<()> {
    if let Some(&bad) = leaf.iter().find(|&&p| p as usize >= dataset.n()) {
        return invalid(format!("leaf contains point {bad} outside [0, {})", dataset.n()));
    }
    if graph.n() != dataset.n() {
        return invalid("graph and dataset sizes differ");
    }
    let mut sorted;
    let leaf = if leaf.windows(2).all(|w| w[0] < w[1]) {
        leaf
    } else {
        sorted = leaf.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        &sorted[..]
    };
    leaf_pairs(graph, dataset, leaf, cache);
    Ok(())
}

fn leaf_pairs(graph: &mut KnnGraph, dataset: &Dataset, leaf: &[u32], cache: &mut PairCache) {
    // A cached pair was already offered to both lists; offering it again
    // cannot change them.
    let skip_hits = cache.all_offered();
    for (a, &u) in leaf.iter().enumerate() {
        for &v in &leaf[a + 1..] {
            let (d, fresh) = cache.get_or_compute(dataset, u, v);
            if fresh || !skip_hits {
                pairwise_update(graph, u, v, d);
            }
        }
    }
}

/// Incremental builder: run divisions one at a time, then propagate.
///
/// [`build_graph`] drives this with the effective-rate trigger; tests and the
/// benchmark harness use it directly to inspect intermediate graphs.
pub struct Builder<'a> {
    dataset: &'a Dataset,
    cfg: BuildConfig,
    graph: KnnGraph,
    cache: PairCache,
    stats: BuildStats,
    started: Instant,
}

impl<'a> Builder<'a> {
    pub fn new(dataset: &'a Dataset, cfg: BuildConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.k >= dataset.n() {
            return invalid(format!("k = {} must be below n = {}", cfg.k, dataset.n()));
        }
        Ok(Builder {
            dataset,
            cfg,
            graph: KnnGraph::new(dataset.n(), cfg.k),
            cache: PairCache::new(dataset.n()),
            stats: BuildStats {
                propagation_budget: cfg.propagation_budget,
                ..Default::default()
            },
            started: Instant::now(),
        })
    }

    pub fn graph(&self) -> &KnnGraph {
        &self.graph
    }

    pub fn cache(&self) -> &PairCache {
        &self.cache
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn config(&self) -> &BuildConfig {
        &self.cfg
    }

    pub fn divisions_run(&self) -> usize {
        self.stats.divisions.len()
    }

    /// Generates the next division from its own seed stream and applies it.
    pub fn run_division(&mut self) -> Result<&DivisionRecord> {
        let t0 = Instant::now();
        let index = self.stats.divisions.len() as u64;
        let mut rng = division_rng(self.cfg.division.seed, index);
        let division = random_division(self.dataset, &self.cfg.division, &mut rng)?;
        self.apply(&division, t0)
    }

    /// Applies a caller-supplied division as the next one. Its leaves must
    /// partition `[0, n)`.
    pub fn apply_division(&mut self, division: &Division) -> Result<&DivisionRecord> {
        self.apply(division, Instant::now())
    }

    fn apply(&mut self, division: &Division, t0: Instant) -> Result<&DivisionRecord> {
        let misses_before = self.cache.misses();
        let kernel_before = self.dataset.kernel_calls();
        self.cache.push_division(division)?;
        let skip_hits = self.cache.all_offered();
        let graph = &mut self.graph;
        for (l, leaf) in division.leaves.iter().enumerate() {
            self.cache
                .leaf_pairs(self.dataset, l, leaf, skip_hits, |u, v, d, _| {
                    pairwise_update(graph, u, v, d);
                });
        }
        let index = self.stats.divisions.len() + 1;
        let cumulative = self.cache.misses();
        let new_pairs = cumulative - misses_before;
        let effective_rate = if cumulative == 0 {
            if index == 1 {
                1.0
            } else {
                0.0
            }
        } else {
            new_pairs as f64 / cumulative as f64
        };
        self.stats.divisions.push(DivisionRecord {
            index,
            leaves: division.leaves.len(),
            depth: division.depth,
            new_pairs,
            cumulative_pairs: cumulative,
            effective_rate,
            wall_time: t0.elapsed().as_secs_f64(),
            distance_computations: self.dataset.kernel_calls() - kernel_before,
        });
        Ok(self.stats.divisions.last().expect("just pushed"))
    }

    /// Runs neighborhood propagation over every point once.
    pub fn propagate(&mut self) -> &PropagationRecord {
        let t0 = Instant::now();
        let misses_before = self.cache.misses();
        let hits_before = self.cache.hits();
        let kernel_before = self.dataset.kernel_calls();
        let mut prop = Propagator::new(self.dataset.n());
        let visited = prop.propagate_all(
            &mut self.graph,
            self.dataset,
            self.cfg.propagation_budget,
            &mut self.cache,
        );
        self.stats.propagation = Some(PropagationRecord {
            new_pairs: self.cache.misses() - misses_before,
            cache_hits: self.cache.hits() - hits_before,
            distance_computations: self.dataset.kernel_calls() - kernel_before,
            visited,
            wall_time: t0.elapsed().as_secs_f64(),
        });
        self.stats.propagation.as_ref().expect("just set")
    }

    /// Runs divisions until the cap or the trigger, then propagates if enabled.
    pub fn run(&mut self) -> Result<()> {
        while self.stats.divisions.len() < self.cfg.max_divisions {
            let rec = self.run_division()?;
            let (index, rate) = (rec.index, rec.effective_rate);
            if self.cfg.enable_propagation && index >= 2 && rate < self.cfg.trigger_threshold {
                self.stats.propagation_triggered_at = Some(index);
                break;
            }
        }
        if self.cfg.enable_propagation && self.stats.propagation.is_none() {
            self.propagate();
        }
        Ok(())
    }

    pub fn finish(mut self) -> (KnnGraph, BuildStats) {
        self.stats.cache_hits = self.cache.hits();
        self.stats.cache_misses = self.cache.misses();
        self.stats.wall_time = self.started.elapsed().as_secs_f64();
        (self.graph, self.stats)
    }
}

/// Builds an approximate k-NN graph. Deterministic given `cfg`.
pub fn build_graph(dataset: &Dataset, cfg: &BuildConfig) -> Result<(KnnGraph, BuildStats)> {
    let mut builder = Builder::new(dataset, *cfg)?;
    builder.run()?;
    Ok(builder.finish())
}
