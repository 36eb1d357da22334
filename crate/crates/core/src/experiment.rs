//! Parameter sweeps over radius and threshold, and stage benchmarks.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::color::{convert_image, RgbImage};
use crate::community::{best_partition, fast_greedy, segment, Partition};
use crate::io::{load_image, load_labelmap, SweepRecord};
use crate::metrics::{aom, select_reference, AomParams, Segmentation};
use crate::pipeline::{extract_superpixels, segment_image, Config, Extractor, Timings};
use crate::spgraph::{build_graph, Threshold};
use crate::{Error, Result};

/// One image with its manual segmentations.
#[derive(Debug, Clone)]
pub struct SweepItem {
    pub id: String,
    pub image: RgbImage,
    pub ground_truth: Vec<Segmentation>,
}

/// Radii and thresholds to visit; `None` is adaptive thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub radii: Vec<usize>,
    pub thresholds: Vec<Option<f64>>,
}

impl Default for SweepGrid {
    /// `R = 1..=5`, static `t = 0.5, 1.0, ..., 40.0`, plus adaptive.
    fn default() -> Self {
        let mut thresholds: Vec<Option<f64>> = (1..=80).map(|k| Some(k as f64 * 0.5)).collect();
        thresholds.push(None);
        Self {
            radii: (1..=5).collect(),
            thresholds,
        }
    }
}

fn image_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Label maps (`*.txt`) in a directory, sorted by file name.
pub fn ground_truth_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    files.sort();
    Ok(files)
}

/// Load `images_dir/*.{png,jpg}` with ground truth from `gt_dir/<stem>/*.txt`.
/// Images without a ground-truth directory are skipped.
pub fn load_dataset(images_dir: &Path, gt_dir: &Path) -> Result<Vec<SweepItem>> {
    let mut items = Vec::new();
    for (stem, path) in image_stems(images_dir)? {
        let dir = gt_dir.join(&stem);
        if !dir.is_dir() {
            continue;
        }
        let ground_truth = ground_truth_files(&dir)?
            .iter()
            .map(|p| load_labelmap(p))
            .collect::<Result<Vec<_>>>()?;
        if ground_truth.is_empty() {
            continue;
        }
        items.push(SweepItem {
            id: stem,
            image: load_image(&path)?,
            ground_truth,
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyInput("no images with ground truth"));
    }
    Ok(items)
}

type CellKey = (String, usize, Option<u64>);

fn cell_key(image: &str, radius: usize, t: Option<f64>) -> CellKey {
    (image.to_string(), radius, t.map(f64::to_bits))
}

/// Run every grid cell for one image that is not already in `done`.
///
/// Super-pixels are extracted once; each cell builds its own graph and
/// community partition and is scored against the reference ground truth.
pub fn sweep_image(item: &SweepItem, config: &Config, grid: &SweepGrid, done: &[SweepRecord]) -> Result<Vec<SweepRecord>> {
    let finished: HashSet<CellKey> = done.iter().map(|r| cell_key(&r.image, r.radius, r.threshold)).collect();
    let cells: Vec<(usize, Option<f64>)> = grid
        .radii
        .iter()
        .flat_map(|&r| grid.thresholds.iter().map(move |&t| (r, t)))
        .filter(|&(r, t)| !finished.contains(&cell_key(&item.id, r, t)))
        .collect();
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    let alpha = AomParams::new(config.alpha)?;
    let reference = &item.ground_truth[select_reference(&item.ground_truth, &alpha)?];

    let start = Instant::now();
    let lab = convert_image(&item.image);
    let (map, _) = extract_superpixels(&lab, config)?;
    let sp_s = start.elapsed().as_secs_f64();

    cells
        .par_iter()
        .map(|&(radius, threshold)| {
            let mut params = config.graph_params();
            params.radius = radius;
            if let Some(t) = threshold {
                params.threshold = Threshold::Static(t);
            }
            let start = Instant::now();
            let graph = build_graph(&map, &params)?;
            let gg_s = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let partition = if graph.edge_count() == 0 {
                Partition::singletons(map.len())
            } else {
                best_partition(&fast_greedy(&graph)?)
            };
            let fg_s = start.elapsed().as_secs_f64();
            let seg = segment(&map, &partition)?;
            Ok(SweepRecord {
                image: item.id.clone(),
                radius,
                threshold,
                superpixels: map.len(),
                communities: partition.community_count(),
                score: aom(&seg, reference, &alpha)?,
                sp_s,
                gg_s,
                fg_s,
            })
        })
        .collect()
}

/// Canonical record order: image, radius, static thresholds ascending, then
/// adaptive.
pub fn sort_records(records: &mut [SweepRecord]) {
    records.sort_by(|a, b| {
        a.image
            .cmp(&b.image)
            .then(a.radius.cmp(&b.radius))
            .then(match (a.threshold, b.threshold) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
    });
}

/// Sweep all items, keeping `done` records and adding the missing cells.
pub fn sweep(items: &[SweepItem], config: &Config, grid: &SweepGrid, done: &[SweepRecord]) -> Result<Vec<SweepRecord>> {
    let mut all = done.to_vec();
    for item in items {
        all.extend(sweep_image(item, config, grid, done)?);
    }
    sort_records(&mut all);
    Ok(all)
}

/// Sample Pearson correlation; `None` if either side is constant or the
/// inputs have fewer than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    (mean, var.sqrt())
}

/// Score statistics for one radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusSummary {
    pub radius: usize,
    pub records: usize,
    pub mean_i: f64,
    pub std_i: f64,
    pub adaptive_mean_i: f64,
    pub adaptive_std_i: f64,
    /// Correlation of score with the static threshold value.
    pub rho_i_t: Option<f64>,
}

pub fn summarize(records: &[SweepRecord]) -> Vec<RadiusSummary> {
    let mut radii: Vec<usize> = records.iter().map(|r| r.radius).collect();
    radii.sort_unstable();
    radii.dedup();
    radii
        .into_iter()
        .map(|radius| {
            let of_r: Vec<&SweepRecord> = records.iter().filter(|r| r.radius == radius).collect();
            let all: Vec<f64> = of_r.iter().map(|r| r.score).collect();
            let adaptive: Vec<f64> = of_r.iter().filter(|r| r.threshold.is_none()).map(|r| r.score).collect();
            let (ts, scores): (Vec<f64>, Vec<f64>) =
                of_r.iter().filter_map(|r| r.threshold.map(|t| (t, r.score))).unzip();
            let (mean_i, std_i) = mean_std(&all);
            let (adaptive_mean_i, adaptive_std_i) = mean_std(&adaptive);
            RadiusSummary {
                radius,
                records: of_r.len(),
                mean_i,
                std_i,
                adaptive_mean_i,
                adaptive_std_i,
                rho_i_t: pearson(&ts, &scores),
            }
        })
        .collect()
}

/// Stage timings of one extractor on one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub extractor: Extractor,
    pub superpixels: usize,
    pub communities: usize,
    pub timings: Timings,
}

/// Time the pipeline with `sutp` and `qsutp`, keeping the fastest of
/// `repeats` runs per stage.
pub fn bench(img: &RgbImage, config: &Config, repeats: usize) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    [Extractor::Sutp, Extractor::Qsutp]
        .into_iter()
        .map(|extractor| {
            let config = Config {
                extractor,
                ..config.clone()
            };
            let mut best: Option<BenchRow> = None;
            for _ in 0..repeats {
                let out = segment_image(img, &config)?;
                let t = out.timings;
                match &mut best {
                    None => {
                        best = Some(BenchRow {
                            extractor,
                            superpixels: out.superpixels.len(),
                            communities: out.partition.community_count(),
                            timings: t,
                        })
                    }
                    Some(row) => {
                        row.timings.sp_s = row.timings.sp_s.min(t.sp_s);
                        row.timings.gg_s = row.timings.gg_s.min(t.gg_s);
                        row.timings.fg_s = row.timings.fg_s.min(t.fg_s);
                    }
                }
            }
            Ok(best.expect("at least one repeat"))
        })
        .collect()
}
