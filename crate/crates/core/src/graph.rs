use std::cmp::Ordering;
use std::fmt;

use crate::dataset::Dataset;
use crate::error::{invalid, Result};

/// One outgoing edge: a neighbor id and its distance to the list owner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f64,
}

impl Neighbor {
    pub fn new(id: u32, dist: f64) -> Self {
        Neighbor { id, dist }
    }

    /// Total order used everywhere: ascending distance, ties by ascending id.
    #[inline]
    pub fn cmp_key(&self, other: &Neighbor) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }

    #[inline]
    pub fn precedes(&self, other: &Neighbor) -> bool {
        self.cmp_key(other) == Ordering::Less
    }
}

/// Bounded neighbor list of one point, kept sorted by `(dist, id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    owner: u32,
    capacity: usize,
    entries: Vec<Neighbor>,
}

impl NeighborList {
    pub fn new(owner: u32, capacity: usize) -> Self {
        NeighborList {
            owner,
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn owner(&self) -> u32 {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[Neighbor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn contains(&self, id: u32) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    /// Offers a candidate; keeps the `capacity` smallest distinct candidates.
    pub fn try_insert(&mut self, cand: Neighbor) -> Result<bool> {
        if cand.id == self.owner {
            return invalid(format!("point {} cannot be its own neighbor", self.owner));
        }
        Ok(self.insert(cand))
    }

    #[inline]
    pub(crate) fn insert(&mut self, cand: Neighbor) -> bool {
        debug_assert_ne!(cand.id, self.owner);
        if self.is_full() {
            match self.entries.last() {
                Some(last) if cand.precedes(last) => {}
                _ => return false,
            }
        }
        if self.contains(cand.id) {
            return false;
        }
        if self.is_full() {
            self.entries.pop();
        }
        let pos = self.entries.partition_point(|e| e.precedes(&cand));
        self.entries.insert(pos, cand);
        true
    }

    /// Builds a list from raw entries without enforcing invariants, for
    /// deserialization and fault injection. Run [`validate_graph`] afterwards.
    pub fn from_entries_unchecked(owner: u32, capacity: usize, entries: Vec<Neighbor>) -> Self {
        NeighborList {
            owner,
            capacity,
            entries,
        }
    }

    pub fn entries_mut_unchecked(&mut self) -> &mut Vec<Neighbor> {
        &mut self.entries
    }
}

/// Directed k-NN graph: one bounded neighbor list per point.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    lists: Vec<NeighborList>,
}

impl KnnGraph {
    pub fn new(n: usize, k: usize) -> Self {
        KnnGraph {
            k,
            lists: (0..n).map(|i| NeighborList::new(i as u32, k)).collect(),
        }
    }

    pub fn from_lists(k: usize, lists: Vec<NeighborList>) -> Self {
        KnnGraph { k, lists }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn lists(&self) -> &[NeighborList] {
        &self.lists
    }

    pub fn list(&self, i: usize) -> &NeighborList {
        &self.lists[i]
    }

    pub fn list_mut(&mut self, i: usize) -> &mut NeighborList {
        &mut self.lists[i]
    }

    /// Total number of stored directed edges.
    pub fn edge_count(&self) -> usize {
        self.lists.iter().map(NeighborList::len).sum()
    }

    /// Directed edges as `(owner, neighbor)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.lists
            .iter()
            .flat_map(|l| l.entries.iter().map(move |e| (l.owner, e.id)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    PointCount { graph: usize, dataset: usize },
    WrongOwner { index: usize, owner: u32 },
    WrongCapacity { point: u32, capacity: usize, k: usize },
    OverCapacity { point: u32, len: usize, k: usize },
    SelfLoop { point: u32 },
    IdOutOfRange { point: u32, id: u32 },
    DuplicateId { point: u32, id: u32 },
    Unsorted { point: u32, position: usize },
    StaleDistance { point: u32, neighbor: u32, stored: f64, actual: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PointCount { graph, dataset } => {
                write!(f, "graph has {graph} lists but dataset has {dataset} points")
            }
            Violation::WrongOwner { index, owner } => {
                write!(f, "list {index} is owned by point {owner}")
            }
            Violation::WrongCapacity { point, capacity, k } => {
                write!(f, "point {point}: list capacity {capacity} != k = {k}")
            }
            Violation::OverCapacity { point, len, k } => {
                write!(f, "point {point}: {len} entries exceed k = {k}")
            }
            Violation::SelfLoop { point } => write!(f, "point {point}: self-loop"),
            Violation::IdOutOfRange { point, id } => {
                write!(f, "point {point}: neighbor id {id} out of range")
            }
            Violation::DuplicateId { point, id } => {
                write!(f, "point {point}: neighbor {id} listed twice")
            }
            Violation::Unsorted { point, position } => {
                write!(f, "point {point}: entries out of order at position {position}")
            }
            Violation::StaleDistance {
                point,
                neighbor,
                stored,
                actual,
            } => write!(
                f,
                "pair ({point}, {neighbor}): stored distance {stored} but actual {actual}"
            ),
        }
    }
}

const DIST_REL_TOL: f64 = 1e-6;

/// Checks every list and graph invariant plus stored distances against the
/// dataset. An empty result means the graph is valid.
pub fn validate_graph(graph: &KnnGraph, dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = dataset.n();
    if graph.n() != n {
        out.push(Violation::PointCount {
            graph: graph.n(),
            dataset: n,
        });
        return out;
    }
    let mut seen = vec![u32::MAX; n];
    for (index, list) in graph.lists.iter().enumerate() {
        let point = list.owner;
        if point as usize != index {
            out.push(Violation::WrongOwner {
                index,
                owner: point,
            });
            continue;
        }
        if list.capacity != graph.k {
            out.push(Violation::WrongCapacity {
                point,
                capacity: list.capacity,
                k: graph.k,
            });
        }
        if list.entries.len() > graph.k {
            out.push(Violation::OverCapacity {
                point,
                len: list.entries.len(),
                k: graph.k,
            });
        }
        for (pos, e) in list.entries.iter().enumerate() {
            if pos > 0 && !list.entries[pos - 1].precedes(e) {
                out.push(Violation::Unsorted {
                    point,
                    position: pos,
                });
            }
            if e.id == point {
                out.push(Violation::SelfLoop { point });
                continue;
            }
            if e.id as usize >= n {
                out.push(Violation::IdOutOfRange { point, id: e.id });
                continue;
            }
            if seen[e.id as usize] == point {
                out.push(Violation::DuplicateId { point, id: e.id });
                continue;
            }
            seen[e.id as usize] = point;
            let actual = dataset.kernel(point as usize, e.id as usize);
            let scale = actual.abs().max(e.dist.abs()).max(f64::MIN_POSITIVE);
            if !((e.dist - actual).abs() <= DIST_REL_TOL * scale) {
                out.push(Violation::StaleDistance {
                    point,
                    neighbor: e.id,
                    stored: e.dist,
                    actual,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Metric;
    use proptest::prelude::*;

    fn full_list() -> NeighborList {
        let mut l = NeighborList::new(0, 3);
        for (id, d) in [(1, 1.0), (2, 2.0), (3, 3.0)] {
            assert!(l.try_insert(Neighbor::new(id, d)).unwrap());
        }
        l
    }

    #[test]
    fn insert_into_empty() {
        let mut l = NeighborList::new(0, 3);
        assert!(l.try_insert(Neighbor::new(7, 1.5)).unwrap());
        assert_eq!(l.entries(), &[Neighbor::new(7, 1.5)]);
    }

    #[test]
    fn insert_replaces_worst() {
        let mut l = full_list();
        assert!(l.try_insert(Neighbor::new(9, 2.5)).unwrap());
        let ids: Vec<_> = l.entries().iter().map(|e| (e.id, e.dist)).collect();
        assert_eq!(ids, vec![(1, 1.0), (2, 2.0), (9, 2.5)]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut l = full_list();
        let before = l.clone();
        assert!(!l.try_insert(Neighbor::new(2, 0.5)).unwrap());
        assert_eq!(l, before);
    }

    #[test]
    fn self_insert_is_an_error() {
        let mut l = NeighborList::new(4, 2);
        assert!(l.try_insert(Neighbor::new(4, 1.0)).is_err());
    }

    #[test]
    fn ties_broken_by_id() {
        let mut l = NeighborList::new(0, 2);
        l.try_insert(Neighbor::new(5, 1.0)).unwrap();
        l.try_insert(Neighbor::new(3, 1.0)).unwrap();
        // Equal distance but larger id than the last entry: rejected.
        assert!(!l.try_insert(Neighbor::new(6, 1.0)).unwrap());
        // Equal distance, smaller id: replaces id 5.
        assert!(l.try_insert(Neighbor::new(4, 1.0)).unwrap());
        let ids: Vec<_> = l.entries().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![3, 4]);
    }

    #[test]
    fn insert_is_idempotent() {
        let mut l = NeighborList::new(0, 4);
        assert!(l.try_insert(Neighbor::new(1, 0.3)).unwrap());
        let once = l.clone();
        assert!(!l.try_insert(Neighbor::new(1, 0.3)).unwrap());
        assert_eq!(l, once);
    }

    fn candidate_stream() -> impl Strategy<Value = (usize, Vec<u32>)> {
        (1usize..8, prop::collection::vec(1u32..40, 0..120))
    }

    proptest! {
        // The list after any stream equals the k smallest distinct candidates.
        #[test]
        fn list_matches_sort_oracle((k, stream) in candidate_stream()) {
            // A given id always carries the same distance; many ids tie.
            let dist_of = |id: u32| f64::from((id * 7) % 13);
            let mut list = NeighborList::new(0, k);
            for &id in &stream {
                list.try_insert(Neighbor::new(id, dist_of(id))).unwrap();
            }
            let mut oracle: Vec<Neighbor> = Vec::new();
            for &id in &stream {
                if !oracle.iter().any(|e| e.id == id) {
                    oracle.push(Neighbor::new(id, dist_of(id)));
                }
            }
            oracle.sort_by(|a, b| a.cmp_key(b));
            oracle.truncate(k);
            prop_assert_eq!(list.entries(), oracle.as_slice());
        }
    }

    fn tiny_dataset() -> Dataset {
        Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![3.0], vec![7.0]],
            Metric::Euclidean,
        )
        .unwrap()
    }

    fn exact_tiny() -> KnnGraph {
        let ds = tiny_dataset();
        let mut g = KnnGraph::new(4, 2);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    g.list_mut(i)
                        .try_insert(Neighbor::new(j as u32, ds.distance(i, j).unwrap()))
                        .unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn valid_graph_has_no_violations() {
        assert!(validate_graph(&exact_tiny(), &tiny_dataset()).is_empty());
    }

    #[test]
    fn injected_self_loop_is_reported() {
        let mut g = exact_tiny();
        g.list_mut(2).entries_mut_unchecked()[1] = Neighbor::new(2, 100.0);
        let v = validate_graph(&g, &tiny_dataset());
        assert_eq!(v, vec![Violation::SelfLoop { point: 2 }]);
    }

    #[test]
    fn injected_stale_distance_is_reported() {
        let ds = tiny_dataset();
        let mut g = exact_tiny();
        // Point 3's nearest is point 2 at distance 4; shrink it while staying sorted.
        let actual = ds.distance(3, 2).unwrap();
        g.list_mut(3).entries_mut_unchecked()[0].dist = actual * 0.5;
        let v = validate_graph(&g, &ds);
        assert_eq!(
            v,
            vec![Violation::StaleDistance {
                point: 3,
                neighbor: 2,
                stored: 2.0,
                actual: 4.0
            }]
        );
    }

    #[test]
    fn other_violations() {
        let ds = tiny_dataset();
        let mut g = exact_tiny();
        g.list_mut(0).entries_mut_unchecked().reverse();
        g.list_mut(1).entries_mut_unchecked()[1].id = 9;
        let v = validate_graph(&g, &ds);
        assert!(v.contains(&Violation::Unsorted { point: 0, position: 1 }));
        assert!(v.contains(&Violation::IdOutOfRange { point: 1, id: 9 }));
        let short = KnnGraph::new(3, 2);
        assert_eq!(
            validate_graph(&short, &ds),
            vec![Violation::PointCount { graph: 3, dataset: 4 }]
        );
    }
}
