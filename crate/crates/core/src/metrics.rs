//! Segmentation comparison: region overlap, covering and the adjustable
//! object-oriented measure (AOM).

use std::collections::HashMap;

use rayon::prelude::*;

use crate::{Error, Result};

/// Per-pixel region labels with dense ids `0..region_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    region_count: usize,
}

impl Segmentation {
    /// Checks dimensions and that every id in `0..max+1` is used.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "segmentation dimensions must be positive, got {width}x{height}"
            )));
        }
        if labels.len() != width * height {
            return Err(Error::InvalidLabels(format!(
                "{} labels for a {width}x{height} segmentation",
                labels.len()
            )));
        }
        let count = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut used = vec![false; count];
        for &l in &labels {
            used[l as usize] = true;
        }
        if let Some(gap) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidLabels(format!("region id {gap} is unused")));
        }
        Ok(Self {
            width,
            height,
            labels,
            region_count: count,
        })
    }

    /// Accept arbitrary label values, renumbering them by first appearance.
    pub fn from_raw_labels(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        let mut remap = HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = remap.len() as u32;
                *remap.entry(r).or_insert(next)
            })
            .collect();
        Self::new(width, height, labels)
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

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixel count of each region.
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Pixel indices of region `r`, ascending.
    pub fn region_pixels(&self, r: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == r)
            .map(|(i, _)| i)
            .collect()
    }

    fn check_same_size(&self, other: &Segmentation) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                found: (other.width, other.height),
            });
        }
        Ok(())
    }
}

/// `|R ∩ R'| / |R ∪ R'|` for two pixel sets given as index lists.
pub fn overlap(r: &[usize], r2: &[usize]) -> Result<f64> {
    if r.is_empty() || r2.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut a = r.to_vec();
    let mut b = r2.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(common as f64 / (a.len() + b.len() - common) as f64)
}

/// Dense `n × n'` table of shared pixel counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntersectionMatrix {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl IntersectionMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.cols..(i + 1) * self.cols]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn intersection_matrix(s: &Segmentation, s2: &Segmentation) -> Result<IntersectionMatrix> {
    s.check_same_size(s2)?;
    let (rows, cols) = (s.region_count, s2.region_count);
    let mut counts = vec![0u64; rows * cols];
    for (&a, &b) in s.labels.iter().zip(&s2.labels) {
        counts[a as usize * cols + b as usize] += 1;
    }
    Ok(IntersectionMatrix { rows, cols, counts })
}

/// Covering of `s` by `s2`: region-size-weighted best overlap. Not symmetric.
pub fn covering(s: &Segmentation, s2: &Segmentation) -> Result<f64> {
    let m = intersection_matrix(s, s2)?;
    let sizes = s.region_sizes();
    let sizes2 = s2.region_sizes();
    let mut total = 0.0;
    for (i, &size) in sizes.iter().enumerate() {
        let best = m
            .row(i)
            .iter()
            .zip(&sizes2)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &size2)| c as f64 / (size + size2 - c as usize) as f64)
            .fold(0.0, f64::max);
        total += size as f64 * best;
    }
    Ok(total / s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct AomParams {
    pub alpha: f64,
}

impl AomParams {
    pub fn new(alpha: f64) -> Result<Self> {
        let p = Self { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Over-segmentation penalty for a region with `s` overlapping counterparts.
pub fn penalty(s: usize, p: &AomParams) -> f64 {
    let scaled = p.alpha * s as f64;
    if scaled >= 1.0 {
        1.0 / scaled
    } else {
        1.0
    }
}

/// Adjustable object-oriented measure between two segmentations.
///
/// Intersections are taken greedily from largest to smallest, each region of
/// either map used at most once. Equal counts are ordered by the first pixel
/// (in row-major order) of the intersection, which is the same whichever map
/// comes first, so with `alpha = 0` the measure is exactly symmetric.
pub fn aom(s: &Segmentation, s2: &Segmentation, p: &AomParams) -> Result<f64> {
    s.check_same_size(s2)?;
    p.validate()?;
    let cols = s2.region_count as u64;
    // (count, first pixel) per nonzero cell.
    let mut cells: HashMap<u64, (u64, usize)> = HashMap::new();
    for (px, (&a, &b)) in s.labels.iter().zip(&s2.labels).enumerate() {
        cells.entry(a as u64 * cols + b as u64).or_insert((0, px)).0 += 1;
    }
    let mut row_support = vec![0usize; s.region_count];
    let mut entries: Vec<(u64, usize, usize, usize)> = cells
        .into_iter()
        .map(|(key, (count, first))| {
            let (i, j) = ((key / cols) as usize, (key % cols) as usize);
            row_support[i] += 1;
            (count, first, i, j)
        })
        .collect();
    entries.sort_unstable_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut row_used = vec![false; s.region_count];
    let mut col_used = vec![false; s2.region_count];
    let mut left = s.region_count.min(s2.region_count);
    let mut sum = 0.0;
    for (count, _, i, j) in entries {
        if left == 0 {
            break;
        }
        if row_used[i] || col_used[j] {
            continue;
        }
        row_used[i] = true;
        col_used[j] = true;
        left -= 1;
        sum += count as f64 * penalty(row_support[i], p);
    }
    Ok(sum / s.len() as f64)
}

/// Index of the segmentation with the largest summed AOM against all others
/// (itself included). Ties go to the lowest index.
pub fn select_reference(segs: &[Segmentation], p: &AomParams) -> Result<usize> {
    let first = segs.first().ok_or(Error::EmptyInput("no segmentations to choose from"))?;
    for s in segs {
        first.check_same_size(s)?;
    }
    let sums: Vec<f64> = segs
        .par_iter()
        .map(|si| segs.iter().map(|sj| aom(si, sj, p)).sum::<Result<f64>>())
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &v) in sums.iter().enumerate() {
        if v > sums[best] {
            best = i;
        }
    }
    Ok(best)
}
