//! Super-pixel extraction.
//!
//! [`sutp_extract`] evolves the boundaries of an initial [`Grid`] by moving
//! boundary pixels to the neighbouring segment of lowest colour-plus-convexity
//! cost. [`slic_extract`] is windowed k-means in `(L, a, b, x, y)`.
//! Both produce a [`SuperPixelMap`] whose super-pixels are 4-connected.

use std::collections::VecDeque;

use crate::color::{LabColor, LabImage};
use crate::grid::Grid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperPixel {
    pub id: u32,
    /// Mean Lab colour of the member pixels.
    pub mean_lab: LabColor,
    /// Mean `(x, y)` of the member pixel coordinates.
    pub centroid: (f64, f64),
    pub size: usize,
}

/// Per-pixel super-pixel labels with per-super-pixel statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperPixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    superpixels: Vec<SuperPixel>,
}

impl SuperPixelMap {
    /// Build a map from row-major labels, computing statistics from `img`.
    ///
    /// Labels must be dense: every id in `0..=max` occurs at least once.
    /// Connectivity is not checked here, see [`SuperPixelMap::is_connected`].
    pub fn from_labels(img: &LabImage, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != img.len() {
            return Err(Error::InvalidLabels(format!(
                "{} labels for {} pixels",
                labels.len(),
                img.len()
            )));
        }
        let n = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut sums = vec![[0.0f64; 5]; n];
        let mut sizes = vec![0usize; n];
        let w = img.width();
        for (i, (&label, lab)) in labels.iter().zip(img.pixels()).enumerate() {
            let s = &mut sums[label as usize];
            s[0] += lab.l;
            s[1] += lab.a;
            s[2] += lab.b;
            s[3] += (i % w) as f64;
            s[4] += (i / w) as f64;
            sizes[label as usize] += 1;
        }
        if let Some(missing) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidLabels(format!("label {missing} has no pixels")));
        }
        let superpixels = sums
            .iter()
            .zip(&sizes)
            .enumerate()
            .map(|(id, (s, &size))| {
                let c = size as f64;
                SuperPixel {
                    id: id as u32,
                    mean_lab: LabColor::new(s[0] / c, s[1] / c, s[2] / c),
                    centroid: (s[3] / c, s[4] / c),
                    size,
                }
            })
            .collect();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            labels,
            superpixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn superpixels(&self) -> &[SuperPixel] {
        &self.superpixels
    }

    pub fn len(&self) -> usize {
        self.superpixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.superpixels.is_empty()
    }

    /// Sorted border-sharing neighbours of every super-pixel.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); self.len()];
        let (w, h) = (self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                let a = self.labels[y * w + x];
                if x + 1 < w {
                    let b = self.labels[y * w + x + 1];
                    if a != b {
                        adj[a as usize].push(b);
                        adj[b as usize].push(a);
                    }
                }
                if y + 1 < h {
                    let b = self.labels[(y + 1) * w + x];
                    if a != b {
                        adj[a as usize].push(b);
                        adj[b as usize].push(a);
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// True when every super-pixel is a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let comps = components(self.width, self.height, &self.labels);
        comps.count == self.len()
    }
}

/// 4-connected components of equal labels, numbered in row-major discovery order.
struct Components {
    ids: Vec<u32>,
    sizes: Vec<usize>,
    labels: Vec<u32>,
    count: usize,
}

fn components(width: usize, height: usize, labels: &[u32]) -> Components {
    let mut ids = vec![u32::MAX; labels.len()];
    let mut sizes = Vec::new();
    let mut comp_labels = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if ids[start] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let label = labels[start];
        ids[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbors4(p, width, height).into_iter().flatten() {
                if ids[q] == u32::MAX && labels[q] == label {
                    ids[q] = id;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
        comp_labels.push(label);
    }
    Components {
        count: sizes.len(),
        ids,
        sizes,
        labels: comp_labels,
    }
}

#[inline]
fn neighbors4(p: usize, width: usize, height: usize) -> [Option<usize>; 4] {
    let (x, y) = (p % width, p / width);
    [
        (y > 0).then(|| p - width),
        (x > 0).then(|| p - 1),
        (x + 1 < width).then(|| p + 1),
        (y + 1 < height).then(|| p + width),
    ]
}

/// Renumber labels densely, keeping the relative order of the ids.
fn compact_labels(labels: &mut [u32]) {
    let n = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut used = vec![false; n];
    for &l in labels.iter() {
        used[l as usize] = true;
    }
    let mut remap = vec![0u32; n];
    let mut next = 0;
    for (old, &u) in used.iter().enumerate() {
        if u {
            remap[old] = next;
            next += 1;
        }
    }
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }
}

// ---------------------------------------------------------------------------
// SUTP

/// Boundary-evolution parameters.
///
/// Evolution stops after `max_iters` scans, or once a scan moves no more than
/// `stop_frac` of the boundary pixels it tested. `stop_frac = 1` is accepted
/// as the degenerate "already converged" setting: the statistics of the
/// initial grid are computed once and no pixel is moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SutpParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    pub stop_frac: f64,
}

impl Default for SutpParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            max_iters: 10,
            stop_frac: 0.001,
        }
    }
}

impl SutpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda1 must be positive, got {}", self.lambda1)));
        }
        if !(self.lambda2 >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda2 must be non-negative, got {}", self.lambda2)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.stop_frac) {
            return Err(Error::InvalidParameter(format!("stop_frac must lie in [0, 1], got {}", self.stop_frac)));
        }
        Ok(())
    }
}

/// Cost of assigning the pixel at `(x, y)` with colour `lab` to `sp`:
/// `lambda1 * |lab - mean| + lambda2 * ((x - cx)^2 + (y - cy)^2)`.
pub fn sutp_cost(x: f64, y: f64, lab: &LabColor, sp: &SuperPixel, p: &SutpParams) -> f64 {
    let dx = x - sp.centroid.0;
    let dy = y - sp.centroid.1;
    p.lambda1 * lab.distance(&sp.mean_lab) + p.lambda2 * (dx * dx + dy * dy)
}

/// Counters for one boundary scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationStats {
    /// Pixels that were on a segment boundary when visited.
    pub boundary: usize,
    pub moved: usize,
}

struct Evolver<'a> {
    img: &'a LabImage,
    labels: Vec<u32>,
    sizes: Vec<usize>,
    stats: Vec<SuperPixel>,
    stamp: Vec<u32>,
    epoch: u32,
    queue: VecDeque<usize>,
}

impl Evolver<'_> {
    fn refresh_stats(&mut self) -> Result<()> {
        let map = SuperPixelMap::from_labels(self.img, self.labels.clone())?;
        self.stats = map.superpixels;
        Ok(())
    }

    /// Whether segment `label` stays 4-connected without pixel `p`.
    fn removal_keeps_connected(&mut self, p: usize, label: u32) -> bool {
        let (w, h) = (self.img.width(), self.img.height());
        let same: Vec<usize> = neighbors4(p, w, h)
            .into_iter()
            .flatten()
            .filter(|&q| self.labels[q] == label)
            .collect();
        if same.len() <= 1 {
            return true;
        }
        if self.locally_connected(p, label, &same) {
            return true;
        }
        // Fall back to a search over the whole segment.
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        self.stamp[p] = epoch;
        self.stamp[same[0]] = epoch;
        self.queue.clear();
        self.queue.push_back(same[0]);
        let mut remaining = same.len() - 1;
        while let Some(q) = self.queue.pop_front() {
            for r in neighbors4(q, w, h).into_iter().flatten() {
                if self.stamp[r] != epoch && self.labels[r] == label {
                    self.stamp[r] = epoch;
                    if same[1..].contains(&r) {
                        remaining -= 1;
                        if remaining == 0 {
                            return true;
                        }
                    }
                    self.queue.push_back(r);
                }
            }
        }
        false
    }

    /// Connectivity of the same-label 4-neighbours inside the 3x3 window
    /// around `p`, with `p` removed.
    fn locally_connected(&self, p: usize, label: u32, same: &[usize]) -> bool {
        let (w, h) = (self.img.width(), self.img.height());
        let (px, py) = ((p % w) as isize, (p / w) as isize);
        let mut inside = [[false; 3]; 3];
        for (dy, row) in inside.iter_mut().enumerate() {
            for (dx, cell) in row.iter_mut().enumerate() {
                let (x, y) = (px + dx as isize - 1, py + dy as isize - 1);
                if (dx, dy) != (1, 1) && x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    *cell = self.labels[y as usize * w + x as usize] == label;
                }
            }
        }
        let to_local = |q: usize| ((q % w) as isize - px + 1, (q / w) as isize - py + 1);
        let mut seen = [[false; 3]; 3];
        let (sx, sy) = to_local(same[0]);
        let mut stack = vec![(sx, sy)];
        seen[sy as usize][sx as usize] = true;
        while let Some((x, y)) = stack.pop() {
            for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                if (0..3).contains(&nx) && (0..3).contains(&ny) {
                    let (ux, uy) = (nx as usize, ny as usize);
                    if inside[uy][ux] && !seen[uy][ux] {
                        seen[uy][ux] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
        same.iter().all(|&q| {
            let (x, y) = to_local(q);
            seen[y as usize][x as usize]
        })
    }

    fn scan(&mut self, p: &SutpParams) -> IterationStats {
        let (w, h) = (self.img.width(), self.img.height());
        let mut stats = IterationStats { boundary: 0, moved: 0 };
        let mut candidates: Vec<u32> = Vec::with_capacity(4);
        for idx in 0..w * h {
            let cur = self.labels[idx];
            candidates.clear();
            for q in neighbors4(idx, w, h).into_iter().flatten() {
                let l = self.labels[q];
                if l != cur && !candidates.contains(&l) {
                    candidates.push(l);
                }
            }
            if candidates.is_empty() {
                continue;
            }
            stats.boundary += 1;
            candidates.sort_unstable();
            let (x, y) = ((idx % w) as f64, (idx / w) as f64);
            let lab = self.img.pixels()[idx];
            let mut best = cur;
            let mut best_cost = sutp_cost(x, y, &lab, &self.stats[cur as usize], p);
            for &c in &candidates {
                let cost = sutp_cost(x, y, &lab, &self.stats[c as usize], p);
                if cost < best_cost {
                    best = c;
                    best_cost = cost;
                }
            }
            if best == cur || self.sizes[cur as usize] <= 1 || !self.removal_keeps_connected(idx, cur) {
                continue;
            }
            self.labels[idx] = best;
            self.sizes[cur as usize] -= 1;
            self.sizes[best as usize] += 1;
            stats.moved += 1;
        }
        stats
    }
}

/// Run SUTP boundary evolution and report per-scan counters.
pub fn sutp_evolve(img: &LabImage, grid: &Grid, p: &SutpParams) -> Result<(SuperPixelMap, Vec<IterationStats>)> {
    p.validate()?;
    if grid.width() != img.width() || grid.height() != img.height() {
        return Err(Error::DimensionMismatch {
            expected: (img.width(), img.height()),
            found: (grid.width(), grid.height()),
        });
    }
    let labels = grid.label_map();
    let mut sizes = vec![0usize; grid.len()];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let mut ev = Evolver {
        img,
        labels,
        sizes,
        stats: Vec::new(),
        stamp: vec![0; img.len()],
        epoch: 0,
        queue: VecDeque::new(),
    };
    ev.refresh_stats()?;
    let mut history = Vec::new();
    if p.stop_frac < 1.0 {
        for _ in 0..p.max_iters {
            let it = ev.scan(p);
            ev.refresh_stats()?;
            history.push(it);
            if it.moved as f64 <= p.stop_frac * it.boundary as f64 {
                break;
            }
        }
    }
    let Evolver { labels, stats, .. } = ev;
    let map = SuperPixelMap {
        width: img.width(),
        height: img.height(),
        labels,
        superpixels: stats,
    };
    Ok((map, history))
}

/// SUTP super-pixels grown from `grid`.
pub fn sutp_extract(img: &LabImage, grid: &Grid, p: &SutpParams) -> Result<SuperPixelMap> {
    sutp_evolve(img, grid, p).map(|(map, _)| map)
}

// ---------------------------------------------------------------------------
// SLIC

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    /// Target super-pixel count.
    pub k: usize,
    /// Compactness, `1..=20`.
    pub m: f64,
    pub max_iters: usize,
}

impl SlicParams {
    pub fn new(k: usize) -> Self {
        Self { k, m: 10.0, max_iters: 10 }
    }

    fn validate(&self, pixels: usize) -> Result<()> {
        if self.k == 0 || self.k > pixels {
            return Err(Error::InvalidParameter(format!(
                "k must lie in 1..={pixels}, got {}",
                self.k
            )));
        }
        if !(1.0..=20.0).contains(&self.m) {
            return Err(Error::InvalidParameter(format!("m must lie in [1, 20], got {}", self.m)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A SLIC cluster centre in `(L, a, b, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicCenter {
    pub lab: LabColor,
    pub x: f64,
    pub y: f64,
}

/// `sqrt(dc^2 + (ds / s)^2 * m^2)` for colour distance `dc` and spatial
/// distance `ds` between a pixel and a centre.
pub fn slic_distance(lab: &LabColor, x: f64, y: f64, center: &SlicCenter, s: f64, m: f64) -> f64 {
    let dc2 = lab.distance_squared(&center.lab);
    let ds2 = (x - center.x).powi(2) + (y - center.y).powi(2);
    (dc2 + ds2 / (s * s) * m * m).sqrt()
}

pub fn slic_extract(img: &LabImage, p: &SlicParams) -> Result<SuperPixelMap> {
    let (w, h) = (img.width(), img.height());
    p.validate(w * h)?;
    let s = ((w * h) as f64 / p.k as f64).sqrt();
    let nx = ((w as f64 / s + 1e-9).floor() as usize).max(1);
    let ny = ((h as f64 / s + 1e-9).floor() as usize).max(1);
    let (step_x, step_y) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * step_x - 0.5;
            let y = (j as f64 + 0.5) * step_y - 0.5;
            let seed = img.get(x.round().clamp(0.0, (w - 1) as f64) as usize, y.round().clamp(0.0, (h - 1) as f64) as usize);
            centers.push(SlicCenter { lab: seed, x, y });
        }
    }
    let mut labels: Vec<u32> = (0..w * h)
        .map(|idx| {
            let i = (((idx % w) as f64 / step_x) as usize).min(nx - 1);
            let j = (((idx / w) as f64 / step_y) as usize).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();

    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..p.max_iters {
        dist.fill(f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let x0 = (center.x - s).ceil().max(0.0) as usize;
            let y0 = (center.y - s).ceil().max(0.0) as usize;
            let x1 = ((center.x + s).floor() as isize).min(w as isize - 1);
            let y1 = ((center.y + s).floor() as isize).min(h as isize - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let idx = y * w + x;
                    let d = slic_distance(&img.pixels()[idx], x as f64, y as f64, center, s, p.m);
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = c as u32;
                    }
                }
            }
        }
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            let lab = img.pixels()[idx];
            let acc = &mut sums[l as usize];
            acc[0] += lab.l;
            acc[1] += lab.a;
            acc[2] += lab.b;
            acc[3] += (idx % w) as f64;
            acc[4] += (idx / w) as f64;
            acc[5] += 1.0;
        }
        for (center, acc) in centers.iter_mut().zip(&sums) {
            if acc[5] > 0.0 {
                let n = acc[5];
                *center = SlicCenter {
                    lab: LabColor::new(acc[0] / n, acc[1] / n, acc[2] / n),
                    x: acc[3] / n,
                    y: acc[4] / n,
                };
            }
        }
    }
    compact_labels(&mut labels);
    let map = SuperPixelMap::from_labels(img, labels)?;
    absorb_isolated(&map, img)
}

/// Relabel every 4-connected component that is not the largest component of
/// its label to the largest super-pixel among its neighbours.
pub fn absorb_isolated(map: &SuperPixelMap, img: &LabImage) -> Result<SuperPixelMap> {
    let (w, h) = (map.width, map.height);
    if img.width() != w || img.height() != h {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            found: (img.width(), img.height()),
        });
    }
    let comps = components(w, h, &map.labels);
    if comps.count == map.len() {
        return Ok(map.clone());
    }
    let mut main = vec![usize::MAX; map.len()];
    for c in 0..comps.count {
        let l = comps.labels[c] as usize;
        if main[l] == usize::MAX || comps.sizes[c] > comps.sizes[main[l]] {
            main[l] = c;
        }
    }
    let mut resolved = vec![false; comps.count];
    let mut label_size = vec![0usize; map.len()];
    for (l, &c) in main.iter().enumerate() {
        resolved[c] = true;
        label_size[l] = comps.sizes[c];
    }
    let mut comp_label = comps.labels.clone();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); comps.count];
    for (p, &c) in comps.ids.iter().enumerate() {
        if !resolved[c as usize] {
            members[c as usize].push(p);
        }
    }
    let mut pending: Vec<usize> = (0..comps.count).filter(|&c| !resolved[c]).collect();
    let mut labels = map.labels.clone();
    while !pending.is_empty() {
        let mut next = Vec::new();
        for &c in &pending {
            let mut best: Option<u32> = None;
            for &p in &members[c] {
                for q in neighbors4(p, w, h).into_iter().flatten() {
                    let qc = comps.ids[q] as usize;
                    if qc == c || !resolved[qc] {
                        continue;
                    }
                    let l = comp_label[qc];
                    best = match best {
                        Some(b) if label_size[b as usize] > label_size[l as usize]
                            || (label_size[b as usize] == label_size[l as usize] && b < l) =>
                        {
                            Some(b)
                        }
                        _ => Some(l),
                    };
                }
            }
            match best {
                Some(l) => {
                    for &p in &members[c] {
                        labels[p] = l;
                    }
                    comp_label[c] = l;
                    label_size[l as usize] += comps.sizes[c];
                    resolved[c] = true;
                }
                None => next.push(c),
            }
        }
        if next.len() == pending.len() {
            return Err(Error::Invariant("isolated components without resolvable neighbours".into()));
        }
        pending = next;
    }
    compact_labels(&mut labels);
    SuperPixelMap::from_labels(img, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::regular_grid;

    const DARK: LabColor = LabColor::new(25.0, 10.0, -20.0);
    const LIGHT: LabColor = LabColor::new(75.0, -15.0, 35.0);

    fn lab_fn(w: usize, h: usize, f: impl Fn(usize, usize) -> LabColor) -> LabImage {
        let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        LabImage::new(w, h, data).unwrap()
    }

    fn assert_stats_consistent(map: &SuperPixelMap, img: &LabImage) {
        let fresh = SuperPixelMap::from_labels(img, map.labels().to_vec()).unwrap();
        for (a, b) in map.superpixels().iter().zip(fresh.superpixels()) {
            assert_eq!(a.size, b.size);
            assert!(a.mean_lab.distance(&b.mean_lab) < 1e-9);
            assert!((a.centroid.0 - b.centroid.0).abs() < 1e-9);
            assert!((a.centroid.1 - b.centroid.1).abs() < 1e-9);
        }
        assert_eq!(map.len(), fresh.len());
        assert!(map.is_connected());
    }

    fn sp(mean: LabColor, cx: f64, cy: f64) -> SuperPixel {
        SuperPixel { id: 0, mean_lab: mean, centroid: (cx, cy), size: 1 }
    }

    #[test]
    fn cost_values() {
        let p = SutpParams::default();
        let c = LabColor::new(50.0, 1.0, 2.0);
        assert_eq!(sutp_cost(3.0, 4.0, &c, &sp(c, 3.0, 4.0), &p), 0.0);

        let pure_color = SutpParams { lambda2: 0.0, ..p };
        let other = LabColor::new(50.0, 1.0 + 4.5, 2.0 + 6.0);
        assert!((sutp_cost(0.0, 0.0, &c, &sp(other, 9.0, 9.0), &pure_color) - 7.5).abs() < 1e-12);

        // 2 + 0.1 * (3^2 + 4^2)
        let two_away = LabColor::new(52.0, 1.0, 2.0);
        let expected = 2.0 + 0.1 * 25.0;
        assert!((sutp_cost(13.0, 24.0, &c, &sp(two_away, 10.0, 20.0), &p) - expected).abs() < 1e-12);
        assert!((expected - 4.5f64).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(SutpParams { lambda1: 0.0, ..SutpParams::default() }.validate().is_err());
        assert!(SutpParams { lambda2: -1.0, ..SutpParams::default() }.validate().is_err());
        assert!(SutpParams { max_iters: 0, ..SutpParams::default() }.validate().is_err());
        assert!(SutpParams { stop_frac: 1.5, ..SutpParams::default() }.validate().is_err());
    }

    #[test]
    fn uniform_image_keeps_grid() {
        let img = lab_fn(100, 100, |_, _| DARK);
        let grid = regular_grid(100, 100, 10).unwrap();
        let p = SutpParams { stop_frac: 0.0, ..SutpParams::default() };
        let (map, history) = sutp_evolve(&img, &grid, &p).unwrap();
        assert_eq!(map.labels(), grid.label_map().as_slice());
        // Nothing moves, so the first scan already meets the stop rule.
        assert_eq!(history.len(), 1);
        assert!(history.iter().all(|it| it.moved == 0 && it.boundary > 0));
    }

    #[test]
    fn degenerate_stop_fraction_returns_grid() {
        let img = lab_fn(60, 60, |x, _| if x < 25 { DARK } else { LIGHT });
        let grid = regular_grid(60, 60, 10).unwrap();
        let p = SutpParams { stop_frac: 1.0, ..SutpParams::default() };
        let (map, history) = sutp_evolve(&img, &grid, &p).unwrap();
        assert!(history.is_empty());
        assert_eq!(map.labels(), grid.label_map().as_slice());
        assert_stats_consistent(&map, &img);
    }

    /// Fraction of colour-edge pixel pairs that also separate two super-pixels.
    fn boundary_recall(img: &LabImage, map: &SuperPixelMap) -> f64 {
        let (w, h) = (img.width(), img.height());
        let (mut edges, mut hit) = (0, 0);
        for y in 0..h {
            for x in 0..w {
                let right = (x + 1 < w).then(|| (x + 1, y));
                let down = (y + 1 < h).then(|| (x, y + 1));
                for (qx, qy) in [right, down].into_iter().flatten() {
                    if img.get(x, y) != img.get(qx, qy) {
                        edges += 1;
                        if map.label(x, y) != map.label(qx, qy) {
                            hit += 1;
                        }
                    }
                }
            }
        }
        hit as f64 / edges as f64
    }

    #[test]
    fn two_colors_converge_to_boundary() {
        let img = lab_fn(100, 100, |x, y| if x < 45 && y < 63 || x < 27 { DARK } else { LIGHT });
        let grid = regular_grid(100, 100, 10).unwrap();
        let (map, history) = sutp_evolve(&img, &grid, &SutpParams::default()).unwrap();
        assert!(history.len() <= 10);
        assert!(boundary_recall(&img, &map) >= 0.99, "{}", boundary_recall(&img, &map));
        assert_stats_consistent(&map, &img);
    }

    #[test]
    fn extraction_is_deterministic() {
        let img = lab_fn(64, 48, |x, y| LabColor::new(((x * 7 + y * 3) % 50) as f64, (x % 5) as f64, (y % 9) as f64));
        let grid = regular_grid(64, 48, 8).unwrap();
        let a = sutp_extract(&img, &grid, &SutpParams::default()).unwrap();
        let b = sutp_extract(&img, &grid, &SutpParams::default()).unwrap();
        assert_eq!(a, b);
        assert_stats_consistent(&a, &img);
        let s1 = slic_extract(&img, &SlicParams::new(20)).unwrap();
        let s2 = slic_extract(&img, &SlicParams::new(20)).unwrap();
        assert_eq!(s1, s2);
        assert_stats_consistent(&s1, &img);
        assert!(s1.len() <= 20);
    }

    #[test]
    fn moves_never_disconnect_segments() {
        // Thin diagonal stripes try hard to tear cells apart.
        let img = lab_fn(60, 60, |x, y| if (x + y) % 7 < 2 { LIGHT } else { DARK });
        let grid = regular_grid(60, 60, 6).unwrap();
        let p = SutpParams { lambda2: 0.0, ..SutpParams::default() };
        let map = sutp_extract(&img, &grid, &p).unwrap();
        assert_eq!(map.len(), grid.len());
        assert_stats_consistent(&map, &img);
    }

    #[test]
    fn slic_distance_values() {
        let c = SlicCenter { lab: LabColor::new(10.0, 0.0, 0.0), x: 0.0, y: 0.0 };
        let s = 7.0;
        assert!((slic_distance(&LabColor::new(15.0, 0.0, 0.0), 0.0, 0.0, &c, s, 10.0) - 5.0).abs() < 1e-12);
        assert!((slic_distance(&c.lab, 0.0, s, &c, s, 10.0) - 10.0).abs() < 1e-12);
        // dc = 3, ds = 2S, m = 5: sqrt(9 + 4 * 25)
        let d = slic_distance(&LabColor::new(10.0, 3.0, 0.0), 2.0 * s * 0.6, 2.0 * s * 0.8, &c, s, 5.0);
        assert!((d - 109f64.sqrt()).abs() < 1e-12);
        assert!((d - 10.4403).abs() < 1e-4);
    }

    #[test]
    fn slic_uniform_quadrants() {
        let img = lab_fn(20, 20, |_, _| DARK);
        let map = slic_extract(&img, &SlicParams::new(4)).unwrap();
        assert_eq!(map.len(), 4);
        // Voronoi cells of the seeds at (4.5, 4.5), (14.5, 4.5), ... are the quadrants.
        for y in 0..20 {
            for x in 0..20 {
                let want = (y / 10) * 2 + x / 10;
                assert_eq!(map.label(x, y) as usize, want, "({x}, {y})");
            }
        }
    }

    #[test]
    fn slic_single_cluster() {
        let img = lab_fn(30, 17, |x, y| if x < y { DARK } else { LIGHT });
        let map = slic_extract(&img, &SlicParams::new(1)).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map.superpixels()[0].size, 30 * 17);
    }

    #[test]
    fn slic_two_colors_are_pure() {
        let img = lab_fn(200, 100, |x, _| if x < 90 { DARK } else { LIGHT });
        let p = SlicParams { k: 8, m: 1.0, max_iters: 10 };
        let map = slic_extract(&img, &p).unwrap();
        assert!(map.len() <= 8);
        let mut colors: Vec<Option<LabColor>> = vec![None; map.len()];
        let mut mixed = 0;
        for y in 0..100 {
            for x in 0..200 {
                let l = map.label(x, y) as usize;
                match colors[l] {
                    None => colors[l] = Some(img.get(x, y)),
                    Some(c) if c != img.get(x, y) => mixed += 1,
                    _ => {}
                }
            }
        }
        assert_eq!(mixed, 0);
        assert!(map.is_connected());
    }

    #[test]
    fn slic_rejects_bad_params() {
        let img = lab_fn(4, 4, |_, _| DARK);
        assert!(slic_extract(&img, &SlicParams::new(0)).is_err());
        assert!(slic_extract(&img, &SlicParams::new(17)).is_err());
        assert!(slic_extract(&img, &SlicParams { k: 2, m: 0.5, max_iters: 10 }).is_err());
    }

    #[test]
    fn absorb_identity_on_connected_map() {
        let img = lab_fn(20, 20, |x, _| if x < 10 { DARK } else { LIGHT });
        let grid = regular_grid(20, 20, 5).unwrap();
        let map = SuperPixelMap::from_labels(&img, grid.label_map()).unwrap();
        assert_eq!(absorb_isolated(&map, &img).unwrap(), map);
    }

    #[test]
    fn absorb_stray_pixel() {
        let img = lab_fn(5, 5, |_, _| DARK);
        // Label 0 (A) has its main body in the top row and one stray pixel at
        // the centre of label 1 (B).
        let mut labels = vec![1u32; 25];
        labels[..5].fill(0);
        labels[12] = 0;
        let map = SuperPixelMap::from_labels(&img, labels).unwrap();
        assert!(!map.is_connected());
        let fixed = absorb_isolated(&map, &img).unwrap();
        assert_eq!(fixed.label(2, 2), 1);
        assert!(fixed.is_connected());
        assert_eq!(fixed.superpixels()[1].size, 20);
    }

    #[test]
    fn absorb_prefers_largest_neighbour() {
        // 10 x 8 image: B (label 1) covers columns 0..5 (40 px + island
        // neighbours), C (label 2) columns 5..10 minus a top stripe that belongs
        // to A (label 0). A's stray 2-pixel island straddles the B/C border.
        let (w, h) = (10, 8);
        let img = lab_fn(w, h, |_, _| DARK);
        let mut labels = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                labels[y * w + x] = if y < 2 && x >= 5 {
                    0
                } else if x < 5 {
                    1
                } else {
                    2
                };
            }
        }
        labels[5 * w + 4] = 0;
        labels[5 * w + 5] = 0;
        let map = SuperPixelMap::from_labels(&img, labels.clone()).unwrap();
        let b_size = labels.iter().filter(|&&l| l == 1).count();
        let c_size = labels.iter().filter(|&&l| l == 2).count();
        assert_eq!((b_size, c_size), (39, 29));
        let fixed = absorb_isolated(&map, &img).unwrap();
        assert_eq!(fixed.label(4, 5), 1);
        assert_eq!(fixed.label(5, 5), 1);
        assert!(fixed.is_connected());
    }

    #[test]
    fn from_labels_rejects_gaps() {
        let img = lab_fn(2, 2, |_, _| DARK);
        assert!(SuperPixelMap::from_labels(&img, vec![0, 0, 2, 2]).is_err());
        assert!(SuperPixelMap::from_labels(&img, vec![0, 0, 1]).is_err());
    }
}
