use rustc_hash::FxHashMap;

use crate::dataset::Dataset;
use crate::error::{invalid, Result};
use crate::partition::Division;

/// Memo of every unordered pair whose distance has been computed.
///
/// Pairs computed while brute-forcing the leaves of a registered division are
/// stored in one dense square block per leaf, so a pair is found by comparing
/// the leaf labels of its endpoints division by division. Everything else
/// (propagation, ad-hoc requests) lives in per-point hash buckets holding
/// each pair under both endpoints.
#[derive(Debug, Clone)]
pub struct PairCache {
    n: usize,
    // Point-major: `slots[p * stride + t]` locates p inside division t.
    slots: Vec<Slot>,
    stride: usize,
    blocks: Vec<LeafBlocks>,
    extra: Vec<FxHashMap<u32, f64>>,
    extra_pairs: u64,
    hits: u64,
    misses: u64,
    // False once a pair entered the cache without being offered to a graph.
    offered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    leaf: u32,
    pos: u32,
}

const UNSET: Slot = Slot {
    leaf: u32::MAX,
    pos: 0,
};

#[derive(Debug, Clone)]
struct LeafBlocks {
    offset: Vec<usize>,
    size: Vec<u32>,
    dist: Vec<f64>,
}

impl LeafBlocks {
    #[inline]
    fn get(&self, a: Slot, b: Slot) -> f64 {
        let l = a.leaf as usize;
        let row = a.pos as usize * self.size[l] as usize;
        self.dist[self.offset[l] + row + b.pos as usize]
    }
}

/// Where a cached pair was found.
enum Found {
    Block(usize),
    Extra(f64),
}

impl PairCache {
    pub fn new(n: usize) -> Self {
        PairCache {
            n,
            slots: Vec::new(),
            stride: 0,
            blocks: Vec::new(),
            extra: vec![FxHashMap::default(); n],
            extra_pairs: 0,
            hits: 0,
            misses: 0,
            offered: true,
        }
    }

    /// Requests that found a stored distance.
    pub fn hits(&self) -> u64 {
        self.hits
    }

    /// Requests that computed a fresh distance; equals the number of distinct pairs.
    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> u64 {
        self.misses
    }

    pub fn is_empty(&self) -> bool {
        self.misses == 0
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        let (i, j) = (i as usize, j as usize);
        i < self.n && j < self.n && i != j && self.find(i, j, self.blocks.len()).is_some()
    }

    /// True when every cached pair was offered to the graph right after it
    /// was computed, so a hit can skip the (idempotent) repeat offer.
    pub(crate) fn all_offered(&self) -> bool {
        self.offered
    }

    /// Checked `distance(i, j)` through the cache.
    pub fn cached_distance(&mut self, dataset: &Dataset, i: usize, j: usize) -> Result<f64> {
        if i >= dataset.n() || j >= dataset.n() || i == j {
            return invalid(format!("invalid pair ({i}, {j}) for n = {}", dataset.n()));
        }
        if self.n != dataset.n() {
            return invalid("cache was sized for a different dataset");
        }
        let (d, fresh) = self.get_or_compute(dataset, i as u32, j as u32);
        if fresh {
            self.offered = false;
        }
        Ok(d)
    }

    /// Searches the first `upto` divisions, then the buckets.
    #[inline]
    fn find(&self, i: usize, j: usize, upto: usize) -> Option<Found> {
        if upto > 0 {
            let si = &self.slots[i * self.stride..i * self.stride + upto];
            let sj = &self.slots[j * self.stride..j * self.stride + upto];
            if let Some(t) = si.iter().zip(sj).position(|(a, b)| a.leaf == b.leaf) {
                return Some(Found::Block(t));
            }
        }
        if self.extra_pairs > 0 {
            if let Some(&d) = self.extra[i].get(&(j as u32)) {
                return Some(Found::Extra(d));
            }
        }
        None
    }

    #[inline]
    fn value(&self, found: Found, i: usize, j: usize) -> f64 {
        match found {
            Found::Block(t) => {
                let s = self.stride;
                self.blocks[t].get(self.slots[i * s + t], self.slots[j * s + t])
            }
            Found::Extra(d) => d,
        }
    }

    /// Streams `i`'s rows of every division block into cache ahead of a
    /// burst of lookups `(i, *)`; sequential reads are far cheaper than the
    /// scattered misses they replace.
    pub(crate) fn warm(&self, i: u32) {
        let i = i as usize;
        let mut acc = 0.0;
        for (t, blk) in self.blocks.iter().enumerate() {
            let a = self.slots[i * self.stride + t];
            let size = blk.size[a.leaf as usize] as usize;
            let start = blk.offset[a.leaf as usize] + a.pos as usize * size;
            for x in blk.dist[start..start + size].iter().step_by(8) {
                acc += x;
            }
        }
        std::hint::black_box(acc);
    }

    // Kernel argument order is fixed so (i, j) and (j, i) agree bitwise.
    #[inline]
    fn compute(&mut self, dataset: &Dataset, i: usize, j: usize) -> f64 {
        self.misses += 1;
        if i < j {
            dataset.dist(i, j)
        } else {
            dataset.dist(j, i)
        }
    }

    /// Returns the distance and whether it was freshly computed.
    #[inline]
    pub(crate) fn get_or_compute(&mut self, dataset: &Dataset, i: u32, j: u32) -> (f64, bool) {
        let (iu, ju) = (i as usize, j as usize);
        if let Some(found) = self.find(iu, ju, self.blocks.len()) {
            self.hits += 1;
            return (self.value(found, iu, ju), false);
        }
        let d = self.compute(dataset, iu, ju);
        self.extra[iu].insert(j, d);
        self.extra[ju].insert(i, d);
        self.extra_pairs += 1;
        (d, true)
    }

    /// Registers a division whose leaves are about to be brute-forced with
    /// [`PairCache::leaf_pairs`]. The leaves must partition `[0, n)`, and
    /// every leaf must be visited before the next lookup.
    pub(crate) fn push_division(&mut self, division: &Division) -> Result<()> {
        let n = self.n;
        let mut slot = vec![UNSET; n];
        let mut offset = Vec::with_capacity(division.leaves.len());
        let mut size = Vec::with_capacity(division.leaves.len());
        let mut total = 0usize;
        for (l, leaf) in division.leaves.iter().enumerate() {
            for (a, &p) in leaf.iter().enumerate() {
                let p = p as usize;
                if p >= n {
                    return invalid(format!("division contains point {p} out of range"));
                }
                if slot[p] != UNSET {
                    return invalid(format!("point {p} appears in more than one leaf"));
                }
                slot[p] = Slot {
                    leaf: l as u32,
                    pos: a as u32,
                };
            }
            offset.push(total);
            size.push(leaf.len() as u32);
            total += leaf.len() * leaf.len();
        }
        if let Some(p) = slot.iter().position(|&s| s == UNSET) {
            return invalid(format!("point {p} is not covered by the division"));
        }

        let t = self.blocks.len();
        if t == self.stride {
            let stride = (2 * self.stride).max(4);
            let mut grown = vec![UNSET; n * stride];
            for p in 0..n {
                grown[p * stride..p * stride + t]
                    .copy_from_slice(&self.slots[p * self.stride..p * self.stride + t]);
            }
            self.slots = grown;
            self.stride = stride;
        }
        for (p, &s) in slot.iter().enumerate() {
            self.slots[p * self.stride + t] = s;
        }
        self.blocks.push(LeafBlocks {
            offset,
            size,
            dist: vec![0.0; total],
        });
        Ok(())
    }

    /// Visits every pair of leaf `leaf_index` of the last registered
    /// division, computing only pairs not seen before. `visit(u, v, d, fresh)`
    /// is called for fresh pairs, and for cached ones too unless `skip_hits`.
    pub(crate) fn leaf_pairs(
        &mut self,
        dataset: &Dataset,
        leaf_index: usize,
        leaf: &[u32],
        skip_hits: bool,
        mut visit: impl FnMut(u32, u32, f64, bool),
    ) {
        let cur = self.blocks.len() - 1;
        let size = leaf.len();
        let base = self.blocks[cur].offset[leaf_index];
        for (a, &u) in leaf.iter().enumerate() {
            let ui = u as usize;
            for (b, &v) in leaf.iter().enumerate().skip(a + 1) {
                let vi = v as usize;
                let d = match self.find(ui, vi, cur) {
                    Some(Found::Block(t)) => {
                        self.hits += 1;
                        if skip_hits {
                            continue;
                        }
                        self.value(Found::Block(t), ui, vi)
                    }
                    Some(Found::Extra(d)) => {
                        // Copy in: later lookups reach this block before the buckets.
                        self.hits += 1;
                        let block = &mut self.blocks[cur].dist;
                        block[base + a * size + b] = d;
                        block[base + b * size + a] = d;
                        if skip_hits {
                            continue;
                        }
                        d
                    }
                    None => {
                        let d = self.compute(dataset, ui, vi);
                        let block = &mut self.blocks[cur].dist;
                        block[base + a * size + b] = d;
                        block[base + b * size + a] = d;
                        visit(u, v, d, true);
                        continue;
                    }
                };
                visit(u, v, d, false);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Metric;
    use crate::synth;

    #[test]
    fn miss_then_hit_with_unordered_key() {
        let ds = synth::gaussian(10, 3, 1, Metric::Euclidean).unwrap();
        let mut cache = PairCache::new(10);
        let a = cache.cached_distance(&ds, 3, 7).unwrap();
        assert_eq!((cache.misses(), cache.hits()), (1, 0));
        let b = cache.cached_distance(&ds, 7, 3).unwrap();
        assert_eq!((cache.misses(), cache.hits()), (1, 1));
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ds.kernel_calls(), 1);
        assert!(cache.contains(7, 3));
        assert!(!cache.contains(1, 2));
    }

    #[test]
    fn rejects_bad_pairs() {
        let ds = synth::gaussian(4, 2, 1, Metric::Euclidean).unwrap();
        let mut cache = PairCache::new(4);
        assert!(cache.cached_distance(&ds, 2, 2).is_err());
        assert!(cache.cached_distance(&ds, 0, 4).is_err());
        let mut wrong = PairCache::new(5);
        assert!(wrong.cached_distance(&ds, 0, 1).is_err());
        assert_eq!(cache.hits() + cache.misses(), 0);
    }

    fn division(leaves: &[&[u32]]) -> Division {
        Division {
            leaves: leaves.iter().map(|l| l.to_vec()).collect(),
            depth: 1,
        }
    }

    #[test]
    fn division_blocks_dedupe_across_divisions() {
        let ds = synth::gaussian(6, 2, 3, Metric::Euclidean).unwrap();
        let mut cache = PairCache::new(6);
        let mut seen = Vec::new();
        cache.push_division(&division(&[&[0, 1, 2], &[3, 4, 5]])).unwrap();
        for (l, leaf) in [[0u32, 1, 2], [3, 4, 5]].iter().enumerate() {
            cache.leaf_pairs(&ds, l, leaf, true, |u, v, d, fresh| seen.push((u, v, d, fresh)));
        }
        assert_eq!(seen.len(), 6);
        assert!(seen.iter().all(|s| s.3));

        // (0, 1) and (4, 5) shared a leaf before.
        seen.clear();
        cache.push_division(&division(&[&[1, 0, 3], &[2, 4, 5]])).unwrap();
        cache.leaf_pairs(&ds, 0, &[1, 0, 3], false, |u, v, d, fresh| seen.push((u, v, d, fresh)));
        cache.leaf_pairs(&ds, 1, &[2, 4, 5], false, |u, v, d, fresh| seen.push((u, v, d, fresh)));
        let fresh: Vec<(u32, u32)> = seen.iter().filter(|s| s.3).map(|s| (s.0, s.1)).collect();
        assert_eq!(fresh, vec![(1, 3), (0, 3), (2, 4), (2, 5)]);
        assert_eq!(cache.misses(), 10);
        assert_eq!(ds.kernel_calls(), 10);
        for &(u, v, d, _) in &seen {
            assert_eq!(d.to_bits(), ds.kernel(u as usize, v as usize).to_bits());
        }

        // Lookups from outside the leaf loop see every stored pair.
        for i in 0..6u32 {
            for j in 0..6u32 {
                if i != j {
                    let d = cache.cached_distance(&ds, i as usize, j as usize).unwrap();
                    let lo = i.min(j) as usize;
                    let hi = i.max(j) as usize;
                    assert_eq!(d.to_bits(), ds.kernel(lo, hi).to_bits());
                }
            }
        }
        assert_eq!(cache.misses(), 15);
    }

    #[test]
    fn bucket_pairs_are_copied_into_later_blocks() {
        let ds = synth::gaussian(4, 2, 5, Metric::Euclidean).unwrap();
        let mut cache = PairCache::new(4);
        let d = cache.cached_distance(&ds, 2, 1).unwrap();
        cache.push_division(&division(&[&[1, 2], &[0, 3]])).unwrap();
        let mut seen = Vec::new();
        cache.leaf_pairs(&ds, 0, &[1, 2], false, |u, v, d, fresh| seen.push((u, v, d, fresh)));
        cache.leaf_pairs(&ds, 1, &[0, 3], false, |_, _, _, _| {});
        assert_eq!(seen, vec![(1, 2, d, false)]);
        cache.push_division(&division(&[&[0, 1, 2, 3]])).unwrap();
        seen.clear();
        cache.leaf_pairs(&ds, 0, &[0, 1, 2, 3], false, |u, v, d, fresh| seen.push((u, v, d, fresh)));
        assert_eq!(seen.iter().filter(|s| s.3).count(), 4);
        assert_eq!(cache.cached_distance(&ds, 1, 2).unwrap().to_bits(), d.to_bits());
        assert_eq!(cache.misses(), 6);
    }

    #[test]
    fn rejects_non_partitions() {
        let mut cache = PairCache::new(3);
        assert!(cache.push_division(&division(&[&[0, 1], &[1, 2]])).is_err());
        assert!(cache.push_division(&division(&[&[0, 1]])).is_err());
        assert!(cache.push_division(&division(&[&[0, 3], &[1, 2]])).is_err());
        assert!(cache.push_division(&division(&[&[0, 2], &[1]])).is_ok());
    }
}
