//! Fast-greedy (Clauset–Newman–Moore) modularity maximization.
//!
//! Modularity is evaluated on the unweighted edge set. With `m` edges,
//! `c_ij` edges between communities `i` and `j`, `L_i` internal edges and
//! total degree `D_i`, the quantities the agglomeration needs are integers
//! after scaling by `4 m^2`:
//!
//! ```text
//! 4m^2 Q        = sum_i (4m L_i - D_i^2)
//! 4m^2 dQ(i, j) = 2 (2m c_ij - D_i D_j)
//! ```
//!
//! so the merge engine keeps exact integer bookkeeping and ties between
//! candidate merges are genuine ties, broken by the smallest `(min, max)`
//! community-id pair. Each community keeps a sparse map of its inter-community
//! edge counts, and a global max-heap holds candidate merges with lazy
//! invalidation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use crate::metrics::Segmentation;
use crate::spgraph::SPGraph;
use crate::superpixel::SuperPixelMap;
use crate::{Error, Result};

/// Assignment of graph nodes to communities `0..community_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<u32>,
    community_count: usize,
}

impl Partition {
    /// Checks that ids are dense.
    pub fn new(assignment: Vec<u32>) -> Result<Self> {
        let count = assignment.iter().max().map_or(0, |&m| m as usize + 1);
        let mut seen = vec![false; count];
        for &c in &assignment {
            seen[c as usize] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidLabels("community ids are not dense".into()));
        }
        Ok(Self {
            assignment,
            community_count: count,
        })
    }

    /// Renumber arbitrary community keys in order of first appearance.
    pub fn from_keys(keys: &[u32]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let assignment = keys
            .iter()
            .map(|k| {
                let next = remap.len() as u32;
                *remap.entry(*k).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            community_count: remap.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            assignment: (0..n as u32).collect(),
            community_count: n,
        }
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn community_count(&self) -> usize {
        self.community_count
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Newman modularity of `p` on the unweighted edges of `g`.
pub fn modularity(g: &SPGraph, p: &Partition) -> Result<f64> {
    if p.len() != g.node_count() {
        return Err(Error::InvalidParameter(format!(
            "partition covers {} nodes, graph has {}",
            p.len(),
            g.node_count()
        )));
    }
    if g.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    let m = g.edge_count() as f64;
    let mut internal = vec![0.0; p.community_count()];
    let mut degree = vec![0.0; p.community_count()];
    for e in g.edges() {
        let (ca, cb) = (p.assignment[e.a as usize], p.assignment[e.b as usize]);
        if ca == cb {
            internal[ca as usize] += 1.0;
        }
        degree[ca as usize] += 1.0;
        degree[cb as usize] += 1.0;
    }
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(&l, &d)| l / m - (d / (2.0 * m)).powi(2))
        .sum())
}

/// One agglomeration step: communities `a < b` merged into `a`, with the
/// modularity afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub a: u32,
    pub b: u32,
    pub q: f64,
}

/// The dendrogram produced by [`fast_greedy`]. Community ids are the smallest
/// node id they contain.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTrace {
    node_count: usize,
    initial_q: f64,
    merges: Vec<MergeStep>,
}

impl MergeTrace {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn initial_q(&self) -> f64 {
        self.initial_q
    }

    pub fn merges(&self) -> &[MergeStep] {
        &self.merges
    }

    /// Modularity after `step` merges (`0` is the singleton partition).
    pub fn q_at(&self, step: usize) -> f64 {
        if step == 0 {
            self.initial_q
        } else {
            self.merges[step - 1].q
        }
    }

    /// Step with the highest modularity; the earliest one on ties.
    pub fn best_step(&self) -> usize {
        let mut best = 0;
        for step in 1..=self.merges.len() {
            if self.q_at(step) > self.q_at(best) {
                best = step;
            }
        }
        best
    }

    /// Partition after the first `step` merges.
    pub fn partition_at(&self, step: usize) -> Partition {
        let mut parent: Vec<u32> = (0..self.node_count as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                let up = parent[parent[x as usize] as usize];
                parent[x as usize] = up;
                x = up;
            }
            x
        }
        for m in &self.merges[..step.min(self.merges.len())] {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi as usize] = lo;
        }
        let keys: Vec<u32> = (0..self.node_count as u32).map(|x| find(&mut parent, x)).collect();
        Partition::from_keys(&keys)
    }

    /// Write merges as `"step a b Q"` lines, steps counted from 1.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, m) in self.merges.iter().enumerate() {
            writeln!(out, "{} {} {} {:.6}", i + 1, m.a, m.b, m.q)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    key: i64,
    pair: Reverse<(u32, u32)>,
    slots: (u32, u32),
}

/// Incremental CNM state. Communities live in slots; a community's public id
/// is the smallest node id it contains, while its slot is whichever of the two
/// merged slots held the larger neighbour map.
#[derive(Debug, Clone)]
pub struct FastGreedy {
    two_m: i64,
    links: Vec<BTreeMap<u32, i64>>,
    degree: Vec<i64>,
    internal: Vec<i64>,
    id_of_slot: Vec<u32>,
    slot_of_id: Vec<u32>,
    alive: Vec<bool>,
    q_scaled: i64,
    heap: BinaryHeap<Candidate>,
}

impl FastGreedy {
    pub fn new(g: &SPGraph) -> Result<Self> {
        if g.edge_count() == 0 {
            return Err(Error::NoEdges);
        }
        let n = g.node_count();
        let m = g.edge_count() as i64;
        if m >= 1 << 30 {
            return Err(Error::InvalidParameter(format!("{m} edges exceed the exact-arithmetic range")));
        }
        let mut links = vec![BTreeMap::new(); n];
        let mut degree = vec![0i64; n];
        for e in g.edges() {
            links[e.a as usize].insert(e.b, 1);
            links[e.b as usize].insert(e.a, 1);
            degree[e.a as usize] += 1;
            degree[e.b as usize] += 1;
        }
        let q_scaled = -degree.iter().map(|d| d * d).sum::<i64>();
        let mut fg = Self {
            two_m: 2 * m,
            links,
            degree,
            internal: vec![0; n],
            id_of_slot: (0..n as u32).collect(),
            slot_of_id: (0..n as u32).collect(),
            alive: vec![true; n],
            q_scaled,
            heap: BinaryHeap::new(),
        };
        for e in g.edges() {
            fg.push(e.a, e.b);
        }
        Ok(fg)
    }

    fn scale(&self) -> f64 {
        (self.two_m * self.two_m) as f64
    }

    fn key(&self, s: u32, t: u32) -> Option<i64> {
        let c = *self.links[s as usize].get(&t)?;
        Some(self.two_m * c - self.degree[s as usize] * self.degree[t as usize])
    }

    fn push(&mut self, s: u32, t: u32) {
        if let Some(key) = self.key(s, t) {
            let (ia, ib) = (self.id_of_slot[s as usize], self.id_of_slot[t as usize]);
            self.heap.push(Candidate {
                key,
                pair: Reverse((ia.min(ib), ia.max(ib))),
                slots: (s, t),
            });
        }
    }

    fn is_current(&self, c: &Candidate) -> bool {
        let (s, t) = c.slots;
        if !self.alive[s as usize] || !self.alive[t as usize] {
            return false;
        }
        let (ia, ib) = (self.id_of_slot[s as usize], self.id_of_slot[t as usize]);
        c.pair.0 == (ia.min(ib), ia.max(ib)) && self.key(s, t) == Some(c.key)
    }

    /// Current modularity.
    pub fn q(&self) -> f64 {
        self.q_scaled as f64 / self.scale()
    }

    /// Modularity change of merging communities `a` and `b`, or `None` when
    /// they are not both live and adjacent.
    pub fn delta_q(&self, a: u32, b: u32) -> Option<f64> {
        let (s, t) = (*self.slot_of_id.get(a as usize)?, *self.slot_of_id.get(b as usize)?);
        if a == b || !self.alive[s as usize] || !self.alive[t as usize] || self.id_of_slot[s as usize] != a || self.id_of_slot[t as usize] != b {
            return None;
        }
        self.key(s, t).map(|k| 2.0 * k as f64 / self.scale())
    }

    /// Ids of live communities, ascending.
    pub fn communities(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = (0..self.alive.len())
            .filter(|&s| self.alive[s])
            .map(|s| self.id_of_slot[s])
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Pairs of adjacent live communities as `(a, b)` with `a < b`.
    pub fn adjacent_pairs(&self) -> Vec<(u32, u32)> {
        let mut pairs = Vec::new();
        for s in 0..self.alive.len() {
            if !self.alive[s] {
                continue;
            }
            let a = self.id_of_slot[s];
            for &t in self.links[s].keys() {
                let b = self.id_of_slot[t as usize];
                if a < b {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// Apply the best merge, or return `None` when no adjacent pair is left.
    pub fn step(&mut self) -> Option<MergeStep> {
        let best = loop {
            let c = self.heap.pop()?;
            if self.is_current(&c) {
                break c;
            }
        };
        let (mut keep, mut gone) = best.slots;
        if self.links[gone as usize].len() > self.links[keep as usize].len() {
            std::mem::swap(&mut keep, &mut gone);
        }
        let (a, b) = best.pair.0;
        let between = self.links[keep as usize].remove(&gone).unwrap_or(0);
        let drained = std::mem::take(&mut self.links[gone as usize]);
        for (k, c) in drained {
            if k == keep {
                continue;
            }
            let theirs = &mut self.links[k as usize];
            theirs.remove(&gone);
            *theirs.entry(keep).or_insert(0) += c;
            *self.links[keep as usize].entry(k).or_insert(0) += c;
        }
        self.q_scaled += 2 * best.key;
        self.internal[keep as usize] += self.internal[gone as usize] + between;
        self.degree[keep as usize] += self.degree[gone as usize];
        self.alive[gone as usize] = false;
        self.id_of_slot[keep as usize] = a;
        self.slot_of_id[a as usize] = keep;

        let neighbours: Vec<u32> = self.links[keep as usize].keys().copied().collect();
        for k in neighbours {
            self.push(keep, k);
        }
        Some(MergeStep { a, b, q: self.q() })
    }
}

/// Agglomerate from singletons until every connected component is a single
/// community, recording modularity after each merge.
pub fn fast_greedy(g: &SPGraph) -> Result<MergeTrace> {
    let mut engine = FastGreedy::new(g)?;
    let initial_q = engine.q();
    let mut merges = Vec::with_capacity(g.node_count().saturating_sub(1));
    while let Some(step) = engine.step() {
        merges.push(step);
    }
    Ok(MergeTrace {
        node_count: g.node_count(),
        initial_q,
        merges,
    })
}

/// Partition at the highest-modularity cut of the dendrogram.
pub fn best_partition(trace: &MergeTrace) -> Partition {
    trace.partition_at(trace.best_step())
}

/// Per-pixel region labels: each pixel takes the community of its super-pixel.
pub fn segment(map: &SuperPixelMap, part: &Partition) -> Result<Segmentation> {
    if part.len() != map.len() {
        return Err(Error::InvalidParameter(format!(
            "partition covers {} nodes, map has {} super-pixels",
            part.len(),
            map.len()
        )));
    }
    let labels = map.labels().iter().map(|&l| part.assignment[l as usize]).collect();
    Segmentation::new(map.width(), map.height(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn graph(n: usize, edges: &[(u32, u32)]) -> SPGraph {
        SPGraph::from_edges(n, edges.iter().map(|&(a, b)| (a, b, 1.0))).unwrap()
    }

    fn two_cliques(k: u32) -> SPGraph {
        let mut edges = Vec::new();
        for base in [0, k] {
            for i in 0..k {
                for j in i + 1..k {
                    edges.push((base + i, base + j));
                }
            }
        }
        graph(2 * k as usize, &edges)
    }

    /// Eq.-style evaluation with an explicit community-by-community matrix.
    fn brute_modularity(g: &SPGraph, assignment: &[u32]) -> f64 {
        let c = *assignment.iter().max().unwrap() as usize + 1;
        let mut e = vec![vec![0.0; c]; c];
        let m = g.edge_count() as f64;
        for edge in g.edges() {
            let (ca, cb) = (assignment[edge.a as usize] as usize, assignment[edge.b as usize] as usize);
            e[ca][cb] += 0.5 / m;
            e[cb][ca] += 0.5 / m;
        }
        (0..c)
            .map(|i| {
                let a: f64 = e[i].iter().sum();
                e[i][i] - a * a
            })
            .sum()
    }

    fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SPGraph {
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            for j in i + 1..n as u32 {
                if rng.gen_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 1));
        }
        graph(n, &edges)
    }

    #[test]
    fn modularity_known_values() {
        let g = two_cliques(4);
        assert_eq!(modularity(&g, &Partition::new(vec![0; 8]).unwrap()).unwrap(), 0.0);
        let halves = Partition::new(vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        assert!((modularity(&g, &halves).unwrap() - 0.5).abs() < 1e-15);
        let single = graph(2, &[(0, 1)]);
        assert_eq!(modularity(&single, &Partition::singletons(2)).unwrap(), -0.5);
    }

    #[test]
    fn modularity_matches_matrix_oracle() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(21);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 8, 0.4);
            let raw: Vec<u32> = (0..8).map(|_| rng.gen_range(0..4)).collect();
            let p = Partition::from_keys(&raw);
            let q = modularity(&g, &p).unwrap();
            assert!((q - brute_modularity(&g, p.assignment())).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn edgeless_graph_is_an_error() {
        let g = SPGraph::from_edges(3, []).unwrap();
        assert!(matches!(modularity(&g, &Partition::singletons(3)), Err(Error::NoEdges)));
        assert!(matches!(fast_greedy(&g), Err(Error::NoEdges)));
    }

    #[test]
    fn two_triangles() {
        let g = two_cliques(3);
        let trace = fast_greedy(&g).unwrap();
        assert_eq!(trace.merges().len(), 4);
        let best = best_partition(&trace);
        assert_eq!(best.community_count(), 2);
        assert_eq!(best.assignment(), &[0, 0, 0, 1, 1, 1]);
        assert!((trace.q_at(trace.best_step()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_edge() {
        let trace = fast_greedy(&graph(2, &[(0, 1)])).unwrap();
        assert_eq!(trace.initial_q(), -0.5);
        assert_eq!(trace.merges(), &[MergeStep { a: 0, b: 1, q: 0.0 }]);
        assert_eq!(best_partition(&trace).community_count(), 1);
    }

    #[test]
    fn decreasing_trace_picks_singletons() {
        let trace = MergeTrace {
            node_count: 3,
            initial_q: 0.1,
            merges: vec![MergeStep { a: 0, b: 1, q: 0.05 }, MergeStep { a: 0, b: 2, q: 0.0 }],
        };
        assert_eq!(best_partition(&trace), Partition::singletons(3));
    }

    #[test]
    fn ties_choose_smallest_pair() {
        // A 4-cycle: every first merge has the same gain.
        let trace = fast_greedy(&graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)])).unwrap();
        assert_eq!((trace.merges()[0].a, trace.merges()[0].b), (0, 1));
    }

    #[test]
    fn trace_matches_recomputation() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        for _ in 0..30 {
            let n = rng.gen_range(2..25);
            let g = random_graph(&mut rng, n, 0.2);
            let trace = fast_greedy(&g).unwrap();
            for step in 0..=trace.merges().len() {
                let q = modularity(&g, &trace.partition_at(step)).unwrap();
                assert!((q - trace.q_at(step)).abs() < 1e-12);
            }
            let best = trace.q_at(trace.best_step());
            assert!(best >= trace.initial_q());
            assert!(best >= modularity(&g, &Partition::new(vec![0; n]).unwrap()).unwrap() - 1e-12 || components(&g) > 1);
        }
    }

    fn components(g: &SPGraph) -> usize {
        let keys: Vec<u32> = {
            let mut parent: Vec<u32> = (0..g.node_count() as u32).collect();
            fn find(p: &mut [u32], x: u32) -> u32 {
                if p[x as usize] != x {
                    let r = find(p, p[x as usize]);
                    p[x as usize] = r;
                }
                p[x as usize]
            }
            for e in g.edges() {
                let (a, b) = (find(&mut parent, e.a), find(&mut parent, e.b));
                parent[a.max(b) as usize] = a.min(b);
            }
            (0..g.node_count() as u32).map(|x| find(&mut parent, x)).collect()
        };
        Partition::from_keys(&keys).community_count()
    }

    #[test]
    fn disconnected_components_never_merge() {
        let g = graph(7, &[(0, 1), (1, 2), (3, 4), (5, 6)]);
        let trace = fast_greedy(&g).unwrap();
        assert_eq!(trace.merges().len(), 7 - components(&g));
        let last = trace.partition_at(trace.merges().len());
        assert_eq!(last.community_count(), 3);
    }

    #[test]
    fn incremental_delta_q_matches_scratch() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(99);
        for _ in 0..20 {
            let g = random_graph(&mut rng, 12, 0.3);
            let mut fg = FastGreedy::new(&g).unwrap();
            let mut trace = MergeTrace { node_count: 12, initial_q: fg.q(), merges: Vec::new() };
            loop {
                let part = trace.partition_at(trace.merges.len());
                let base = modularity(&g, &part).unwrap();
                assert!((fg.q() - base).abs() < 1e-12);
                for (a, b) in fg.adjacent_pairs() {
                    let merged: Vec<u32> = part
                        .assignment()
                        .iter()
                        .map(|&c| {
                            let ca = part.assignment()[a as usize];
                            let cb = part.assignment()[b as usize];
                            if c == cb { ca } else { c }
                        })
                        .collect();
                    let want = modularity(&g, &Partition::from_keys(&merged)).unwrap() - base;
                    assert!((fg.delta_q(a, b).unwrap() - want).abs() < 1e-12);
                }
                match fg.step() {
                    Some(s) => trace.merges.push(s),
                    None => break,
                }
            }
        }
    }

    #[test]
    fn trace_dump_format() {
        let trace = fast_greedy(&graph(2, &[(0, 1)])).unwrap();
        let mut out = Vec::new();
        trace.write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1 0 1 0.000000\n");
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 2]).is_err());
        let p = Partition::from_keys(&[7, 3, 7, 9]);
        assert_eq!(p.assignment(), &[0, 1, 0, 2]);
        assert_eq!(p.community_count(), 3);
    }

    proptest::proptest! {
        #[test]
        fn trace_is_self_consistent(n in 2usize..16, mask in proptest::collection::vec(proptest::bool::weighted(0.3), 120)) {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n as u32 {
                for j in i + 1..n as u32 {
                    if mask[k % mask.len()] {
                        edges.push((i, j));
                    }
                    k += 1;
                }
            }
            proptest::prop_assume!(!edges.is_empty());
            let g = graph(n, &edges);
            let trace = fast_greedy(&g).unwrap();
            proptest::prop_assert_eq!(trace.merges().len(), n - components(&g));
            for step in 0..=trace.merges().len() {
                let q = trace.q_at(step);
                proptest::prop_assert!((-1.0..=1.0).contains(&q));
                proptest::prop_assert!((modularity(&g, &trace.partition_at(step)).unwrap() - q).abs() < 1e-12);
            }
            let best = trace.q_at(trace.best_step());
            proptest::prop_assert!(best >= trace.initial_q());
            proptest::prop_assert!(best >= trace.q_at(trace.merges().len()));
        }
    }
}
