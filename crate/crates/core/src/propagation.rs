//! Best-first neighborhood propagation.
//!
//! For a point `p`, the current neighbors seed a min-queue keyed by distance
//! to `p`. The nearest queued point is popped and each of its neighbors that
//! has not been visited yet is measured against `p`, offered to both lists,
//! and queued. Expansion stops when the queue drains or `budget` points have
//! been visited (seeds included).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::builder::pairwise_update;
use crate::cache::PairCache;
use crate::dataset::Dataset;
use crate::error::{invalid, Result};
use crate::graph::KnnGraph;

#[derive(Debug, Clone, Copy)]
struct Queued {
    dist: f64,
    id: u32,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Scratch space reused across points.
pub(crate) struct Propagator {
    stamp: Vec<u32>,
    epoch: u32,
    heap: BinaryHeap<Reverse<Queued>>,
    scratch: Vec<u32>,
    fetched: Vec<(f64, bool)>,
}

impl Propagator {
    pub(crate) fn new(n: usize) -> Self {
        Propagator {
            stamp: vec![0; n],
            epoch: 0,
            heap: BinaryHeap::new(),
            scratch: Vec::new(),
            fetched: Vec::new(),
        }
    }

    fn next_epoch(&mut self) -> u32 {
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }

    /// Returns the number of visited points.
    pub(crate) fn propagate_point(
        &mut self,
        graph: &mut KnnGraph,
        dataset: &Dataset,
        p: u32,
        budget: usize,
        cache: &mut PairCache,
    ) -> usize {
        let skip_hits = cache.all_offered();
        cache.warm(p);
        let epoch = self.next_epoch();
        self.heap.clear();
        self.stamp[p as usize] = epoch;
        let mut visited = 0;
        for e in graph.list(p as usize).entries() {
            if visited >= budget {
                break;
            }
            self.stamp[e.id as usize] = epoch;
            visited += 1;
            self.heap.push(Reverse(Queued {
                dist: e.dist,
                id: e.id,
            }));
        }

        'expand: while let Some(Reverse(top)) = self.heap.pop() {
            if visited >= budget {
                break;
            }
            // Collect the unvisited neighbors first, then fetch all their
            // distances in one pass so the cache lookups overlap in memory.
            self.scratch.clear();
            let mut capped = false;
            for e in graph.list(top.id as usize).entries() {
                if self.stamp[e.id as usize] == epoch {
                    continue;
                }
                if visited >= budget {
                    capped = true;
                    break;
                }
                self.stamp[e.id as usize] = epoch;
                visited += 1;
                self.scratch.push(e.id);
            }
            self.fetched.clear();
            self.fetched.extend(
                self.scratch
                    .iter()
                    .map(|&r| cache.get_or_compute(dataset, p, r)),
            );
            for (&r, &(d, fresh)) in self.scratch.iter().zip(&self.fetched) {
                if fresh || !skip_hits {
                    pairwise_update(graph, p, r, d);
                }
                self.heap.push(Reverse(Queued { dist: d, id: r }));
            }
            if capped {
                break 'expand;
            }
        }
        visited
    }

    /// Propagates every point in ascending id order against the live graph.
    pub(crate) fn propagate_all(
        &mut self,
        graph: &mut KnnGraph,
        dataset: &Dataset,
        budget: usize,
        cache: &mut PairCache,
    ) -> u64 {
        (0..graph.n() as u32)
            .map(|p| self.propagate_point(graph, dataset, p, budget, cache) as u64)
            .sum()
    }
}

fn check(graph: &KnnGraph, dataset: &Dataset, budget: usize) -> Result<()> {
    if graph.n() != dataset.n() {
        return invalid("graph and dataset sizes differ");
    }
    if budget < 1 {
        return invalid("visit budget must be >= 1");
    }
    Ok(())
}

/// Upgrades `p`'s list by best-first expansion; returns the visited count.
pub fn propagate_point(
    graph: &mut KnnGraph,
    dataset: &Dataset,
    p: usize,
    budget: usize,
    cache: &mut PairCache,
) -> Result<usize> {
    check(graph, dataset, budget)?;
    if p >= dataset.n() {
        return invalid(format!("point {p} out of range"));
    }
    let mut prop = Propagator::new(dataset.n());
    Ok(prop.propagate_point(graph, dataset, p as u32, budget, cache))
}

/// Runs [`propagate_point`] for every point in ascending id order; returns
/// the total visited count.
pub fn propagate_all(
    graph: &mut KnnGraph,
    dataset: &Dataset,
    budget: usize,
    cache: &mut PairCache,
) -> Result<u64> {
    check(graph, dataset, budget)?;
    let mut prop = Propagator::new(dataset.n());
    Ok(prop.propagate_all(graph, dataset, budget, cache))
}
