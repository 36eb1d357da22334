//! Super-pixel similarity graph.
//!
//! Nodes are super-pixels; a candidate edge joins two super-pixels within
//! radius `R` of each other and survives when the Euclidean distance between
//! their mean Lab colours is at most the node's threshold. With adaptive
//! thresholding each node gets the smallest threshold on the grid
//! `t0, t0 + dt, ...` (capped at `tmax`) that gives it at least one
//! neighbour. The threshold depends only on the node's own candidate weights,
//! so the edge set does not depend on the order nodes are visited in.

use std::collections::VecDeque;
use std::io::Write;

use crate::superpixel::{SuperPixel, SuperPixelMap};
use crate::{Error, Result};

/// How the neighbourhood radius is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusMode {
    /// Shortest-path length in the border-adjacency graph of super-pixels.
    Hops,
    /// Euclidean centroid distance at most `radius * cell_size` pixels.
    Centroid { cell_size: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Adaptive { t0: f64, dt: f64, tmax: f64 },
    Static(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Adaptive {
            t0: 0.5,
            dt: 0.5,
            tmax: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub radius: usize,
    pub radius_mode: RadiusMode,
    pub threshold: Threshold,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            radius: 4,
            radius_mode: RadiusMode::Hops,
            threshold: Threshold::default(),
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::InvalidParameter("radius must be at least 1".into()));
        }
        if let RadiusMode::Centroid { cell_size } = self.radius_mode {
            if !(cell_size > 0.0) {
                return Err(Error::InvalidParameter(format!("cell size must be positive, got {cell_size}")));
            }
        }
        match self.threshold {
            Threshold::Adaptive { t0, dt, tmax } => {
                if !(t0 > 0.0 && t0 <= tmax && dt > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "adaptive threshold needs 0 < t0 <= tmax and dt > 0, got t0={t0} dt={dt} tmax={tmax}"
                    )));
                }
            }
            Threshold::Static(t) => {
                if !(t >= 0.0) {
                    return Err(Error::InvalidParameter(format!("threshold must be non-negative, got {t}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpEdge {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Undirected weighted graph over super-pixels. Edges are sorted by `(a, b)`
/// with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SPGraph {
    node_count: usize,
    edges: Vec<SpEdge>,
    adjacency: Vec<Vec<u32>>,
    node_thresholds: Vec<Option<f64>>,
    capped: Vec<u32>,
}

impl SPGraph {
    /// Graph from an explicit edge list. Duplicate edges collapse to the first
    /// occurrence.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Result<Self> {
        let mut list = Vec::new();
        for (a, b, weight) in edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop on node {a}")));
            }
            if a as usize >= node_count || b as usize >= node_count {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range")));
            }
            if !(weight >= 0.0) {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) has weight {weight}")));
            }
            list.push(SpEdge {
                a: a.min(b),
                b: a.max(b),
                weight,
            });
        }
        Ok(Self::assemble(node_count, list, vec![None; node_count], Vec::new()))
    }

    fn assemble(node_count: usize, mut edges: Vec<SpEdge>, node_thresholds: Vec<Option<f64>>, capped: Vec<u32>) -> Self {
        edges.sort_by_key(|e| (e.a, e.b));
        edges.dedup_by_key(|e| (e.a, e.b));
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            adjacency[e.a as usize].push(e.b);
            adjacency[e.b as usize].push(e.a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            node_count,
            edges,
            adjacency,
            node_thresholds,
            capped,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[SpEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    pub fn degree(&self, node: u32) -> usize {
        self.adjacency[node as usize].len()
    }

    /// Threshold at which each node was connected; `None` for nodes that
    /// reached the cap, had no candidates, or came from [`SPGraph::from_edges`].
    pub fn node_thresholds(&self) -> &[Option<f64>] {
        &self.node_thresholds
    }

    /// Nodes whose cheapest in-radius candidate exceeded the threshold cap
    /// (or that had no candidate at all).
    pub fn capped(&self) -> &[u32] {
        &self.capped
    }

    /// Write the edge list as `"i j weight"` lines.
    pub fn write_edges<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            writeln!(out, "{} {} {:.6}", e.a, e.b, e.weight)?;
        }
        Ok(())
    }
}

/// Euclidean distance between the mean Lab colours of two super-pixels.
pub fn sp_weight(a: &SuperPixel, b: &SuperPixel) -> f64 {
    a.mean_lab.distance(&b.mean_lab)
}

/// Candidate-neighbour generator shared by every node of one build.
enum Neighborhoods<'a> {
    Hops {
        adjacency: Vec<Vec<u32>>,
        radius: usize,
        depth: Vec<u32>,
        queue: VecDeque<u32>,
    },
    Centroid {
        sps: &'a [SuperPixel],
        reach: f64,
        cols: usize,
        rows: usize,
        buckets: Vec<Vec<u32>>,
    },
}

impl<'a> Neighborhoods<'a> {
    fn new(map: &'a SuperPixelMap, radius: usize, mode: RadiusMode) -> Self {
        match mode {
            RadiusMode::Hops => Neighborhoods::Hops {
                adjacency: map.adjacency(),
                radius,
                depth: vec![u32::MAX; map.len()],
                queue: VecDeque::new(),
            },
            RadiusMode::Centroid { cell_size } => {
                let reach = radius as f64 * cell_size;
                let cols = ((map.width() as f64 / reach).ceil() as usize).max(1);
                let rows = ((map.height() as f64 / reach).ceil() as usize).max(1);
                let mut buckets = vec![Vec::new(); cols * rows];
                for sp in map.superpixels() {
                    let (c, r) = Self::bucket(sp, reach, cols, rows);
                    buckets[r * cols + c].push(sp.id);
                }
                Neighborhoods::Centroid {
                    sps: map.superpixels(),
                    reach,
                    cols,
                    rows,
                    buckets,
                }
            }
        }
    }

    fn bucket(sp: &SuperPixel, reach: f64, cols: usize, rows: usize) -> (usize, usize) {
        let c = ((sp.centroid.0 / reach) as usize).min(cols - 1);
        let r = ((sp.centroid.1 / reach) as usize).min(rows - 1);
        (c, r)
    }

    /// Sorted ids within the radius of `i`, excluding `i`.
    fn of(&mut self, i: u32, out: &mut Vec<u32>) {
        out.clear();
        match self {
            Neighborhoods::Hops {
                adjacency,
                radius,
                depth,
                queue,
            } => {
                depth[i as usize] = 0;
                queue.push_back(i);
                let mut touched = vec![i];
                while let Some(u) = queue.pop_front() {
                    let d = depth[u as usize];
                    if d as usize == *radius {
                        continue;
                    }
                    for &v in &adjacency[u as usize] {
                        if depth[v as usize] == u32::MAX {
                            depth[v as usize] = d + 1;
                            touched.push(v);
                            out.push(v);
                            queue.push_back(v);
                        }
                    }
                }
                for t in touched {
                    depth[t as usize] = u32::MAX;
                }
            }
            Neighborhoods::Centroid {
                sps,
                reach,
                cols,
                rows,
                buckets,
            } => {
                let me = &sps[i as usize];
                let (c, r) = Self::bucket(me, *reach, *cols, *rows);
                let reach2 = *reach * *reach;
                for br in r.saturating_sub(1)..=(r + 1).min(*rows - 1) {
                    for bc in c.saturating_sub(1)..=(c + 1).min(*cols - 1) {
                        for &j in &buckets[br * *cols + bc] {
                            let o = &sps[j as usize];
                            let dx = o.centroid.0 - me.centroid.0;
                            let dy = o.centroid.1 - me.centroid.1;
                            if j != i && dx * dx + dy * dy <= reach2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Super-pixels within `radius` of super-pixel `i` (hop distance in the
/// border-adjacency graph), excluding `i` itself.
pub fn neighborhood(map: &SuperPixelMap, i: u32, radius: usize) -> Vec<u32> {
    let mut hoods = Neighborhoods::new(map, radius, RadiusMode::Hops);
    let mut out = Vec::new();
    hoods.of(i, &mut out);
    out
}

/// Smallest grid threshold `t0 + k * dt` reaching `w_min`, or `None` past `tmax`.
fn adaptive_threshold(w_min: f64, t0: f64, dt: f64, tmax: f64) -> Option<f64> {
    // Thresholds are formed as t0 + k * dt rather than by repeated addition so
    // that grid values such as 40.0 are hit exactly.
    if !(w_min <= tmax) {
        return None;
    }
    let at = |k: u64| t0 + k as f64 * dt;
    let mut k = if w_min <= t0 { 0 } else { ((w_min - t0) / dt).ceil() as u64 };
    while k > 0 && at(k - 1) >= w_min {
        k -= 1;
    }
    while at(k) < w_min {
        k += 1;
    }
    (at(k) <= tmax).then(|| at(k))
}

pub fn build_graph(map: &SuperPixelMap, p: &GraphParams) -> Result<SPGraph> {
    let order: Vec<u32> = (0..map.len() as u32).collect();
    build_graph_in_order(map, p, &order)
}

/// [`build_graph`] visiting nodes in the given order.
pub fn build_graph_in_order(map: &SuperPixelMap, p: &GraphParams, order: &[u32]) -> Result<SPGraph> {
    p.validate()?;
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    if order.len() != map.len() {
        return Err(Error::InvalidParameter("visit order must list every node".into()));
    }
    let sps = map.superpixels();
    let mut hoods = Neighborhoods::new(map, p.radius, p.radius_mode);
    let mut candidates = Vec::new();
    let mut weights = Vec::new();
    let mut edges = Vec::new();
    let mut node_thresholds = vec![None; map.len()];
    let mut capped = Vec::new();
    for &i in order {
        hoods.of(i, &mut candidates);
        weights.clear();
        weights.extend(candidates.iter().map(|&j| sp_weight(&sps[i as usize], &sps[j as usize])));
        let t = match p.threshold {
            Threshold::Static(t) => Some(t),
            Threshold::Adaptive { t0, dt, tmax } => {
                let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
                let t = adaptive_threshold(w_min, t0, dt, tmax);
                if t.is_none() {
                    capped.push(i);
                }
                t
            }
        };
        node_thresholds[i as usize] = t;
        let Some(t) = t else { continue };
        for (&j, &w) in candidates.iter().zip(&weights) {
            if w <= t {
                edges.push(SpEdge {
                    a: i.min(j),
                    b: i.max(j),
                    weight: w,
                });
            }
        }
    }
    capped.sort_unstable();
    Ok(SPGraph::assemble(map.len(), edges, node_thresholds, capped))
}
