//! End-to-end segmentation: Lab conversion, super-pixels, graph, communities.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::color::{convert_image, LabImage, RgbImage};
use crate::community::{best_partition, fast_greedy, segment, MergeTrace, Partition};
use crate::grid::{quadtree_grid, regular_grid, QuadtreeParams};
use crate::metrics::Segmentation;
use crate::spgraph::{build_graph, GraphParams, RadiusMode, SPGraph, Threshold};
use crate::superpixel::{slic_extract, sutp_evolve, IterationStats, SlicParams, SuperPixelMap, SutpParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    Sutp,
    Qsutp,
    Slic,
}

impl std::str::FromStr for Extractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sutp" => Ok(Self::Sutp),
            "qsutp" => Ok(Self::Qsutp),
            "slic" => Ok(Self::Slic),
            other => Err(Error::InvalidParameter(format!("unknown extractor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Adaptive,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusKind {
    Hops,
    Centroid,
}

/// Every tunable of the pipeline in one flat, serializable record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub extractor: Extractor,
    /// Regular grid cell size, also the leaf size of the quadtree.
    pub s: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    pub stop_frac: f64,
    pub max_cell: usize,
    pub var_thresh: f64,
    /// SLIC target count; `None` means one super-pixel per `s × s` pixels.
    pub k: Option<usize>,
    pub m: f64,
    pub radius: usize,
    pub radius_kind: RadiusKind,
    pub threshold_mode: ThresholdMode,
    /// Cutoff for static thresholding.
    pub t: f64,
    pub t0: f64,
    pub dt: f64,
    pub tmax: f64,
    pub alpha: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            extractor: Extractor::Sutp,
            s: 10,
            lambda1: 1.0,
            lambda2: 0.1,
            max_iters: 10,
            stop_frac: 0.001,
            max_cell: 80,
            var_thresh: 25.0,
            k: None,
            m: 10.0,
            radius: 4,
            radius_kind: RadiusKind::Hops,
            threshold_mode: ThresholdMode::Adaptive,
            t: 10.0,
            t0: 0.5,
            dt: 0.5,
            tmax: 40.0,
            alpha: 0.0,
        }
    }
}

impl Config {
    pub fn sutp_params(&self) -> SutpParams {
        SutpParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            max_iters: self.max_iters,
            stop_frac: self.stop_frac,
        }
    }

    pub fn quadtree_params(&self) -> QuadtreeParams {
        QuadtreeParams {
            max_cell: self.max_cell,
            min_cell: self.s,
            var_thresh: self.var_thresh,
        }
    }

    pub fn slic_params(&self, pixels: usize) -> SlicParams {
        let k = self.k.unwrap_or_else(|| (pixels / (self.s * self.s).max(1)).max(1));
        SlicParams {
            k,
            m: self.m,
            max_iters: self.max_iters,
        }
    }

    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            radius: self.radius,
            radius_mode: match self.radius_kind {
                RadiusKind::Hops => RadiusMode::Hops,
                RadiusKind::Centroid => RadiusMode::Centroid { cell_size: self.s as f64 },
            },
            threshold: match self.threshold_mode {
                ThresholdMode::Adaptive => Threshold::Adaptive {
                    t0: self.t0,
                    dt: self.dt,
                    tmax: self.tmax,
                },
                ThresholdMode::Static => Threshold::Static(self.t),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s < 2 {
            return Err(Error::InvalidParameter(format!("s must be at least 2, got {}", self.s)));
        }
        self.sutp_params().validate()?;
        if self.extractor == Extractor::Qsutp {
            self.quadtree_params().validate()?;
        }
        if !(1.0..=20.0).contains(&self.m) {
            return Err(Error::InvalidParameter(format!("m must lie in [1, 20], got {}", self.m)));
        }
        if self.k == Some(0) {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        self.graph_params().validate()?;
        crate::metrics::AomParams::new(self.alpha)?;
        Ok(())
    }
}

/// Wall-clock seconds per stage: super-pixels, graph generation, fast greedy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub sp_s: f64,
    pub gg_s: f64,
    pub fg_s: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.sp_s + self.gg_s + self.fg_s
    }
}

pub fn extract_superpixels(lab: &LabImage, config: &Config) -> Result<(SuperPixelMap, Vec<IterationStats>)> {
    config.validate()?;
    match config.extractor {
        Extractor::Sutp => {
            let grid = regular_grid(lab.width(), lab.height(), config.s)?;
            sutp_evolve(lab, &grid, &config.sutp_params())
        }
        Extractor::Qsutp => {
            let grid = quadtree_grid(lab, &config.quadtree_params())?;
            sutp_evolve(lab, &grid, &config.sutp_params())
        }
        Extractor::Slic => Ok((slic_extract(lab, &config.slic_params(lab.len()))?, Vec::new())),
    }
}

#[derive(Debug, Clone)]
pub struct Output {
    pub superpixels: SuperPixelMap,
    pub iterations: Vec<IterationStats>,
    pub graph: SPGraph,
    /// `None` when the graph has no edges.
    pub trace: Option<MergeTrace>,
    pub partition: Partition,
    /// Modularity of `partition`; `None` when the graph has no edges.
    pub modularity: Option<f64>,
    pub segmentation: Segmentation,
    pub timings: Timings,
}

/// Summary written next to the outputs of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub width: usize,
    pub height: usize,
    pub superpixels: usize,
    pub edges: usize,
    pub capped_nodes: usize,
    pub isolated_nodes: usize,
    pub communities: usize,
    pub modularity: Option<f64>,
    pub timings: Timings,
    pub config: Config,
}

impl Output {
    pub fn stats(&self, config: &Config) -> Stats {
        let isolated = (0..self.graph.node_count() as u32)
            .filter(|&i| self.graph.degree(i) == 0)
            .count();
        Stats {
            width: self.segmentation.width(),
            height: self.segmentation.height(),
            superpixels: self.superpixels.len(),
            edges: self.graph.edge_count(),
            capped_nodes: self.graph.capped().len(),
            isolated_nodes: isolated,
            communities: self.partition.community_count(),
            modularity: self.modularity,
            timings: self.timings,
            config: config.clone(),
        }
    }
}

/// Run the whole pipeline. An edgeless graph leaves every super-pixel in its
/// own community.
pub fn segment_image(img: &RgbImage, config: &Config) -> Result<Output> {
    config.validate()?;
    let start = Instant::now();
    let lab = convert_image(img);
    let (superpixels, iterations) = extract_superpixels(&lab, config)?;
    let sp_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let graph = build_graph(&superpixels, &config.graph_params())?;
    let gg_s = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (trace, partition, modularity) = if graph.edge_count() == 0 {
        (None, Partition::singletons(superpixels.len()), None)
    } else {
        let trace = fast_greedy(&graph)?;
        let partition = best_partition(&trace);
        let q = trace.q_at(trace.best_step());
        (Some(trace), partition, Some(q))
    };
    let fg_s = start.elapsed().as_secs_f64();

    let segmentation = segment(&superpixels, &partition)?;
    Ok(Output {
        superpixels,
        iterations,
        graph,
        trace,
        partition,
        modularity,
        segmentation,
        timings: Timings { sp_s, gg_s, fg_s },
    })
}

/// Segmentation whose regions are the super-pixels themselves.
pub fn superpixel_segmentation(map: &SuperPixelMap) -> Result<Segmentation> {
    Segmentation::new(map.width(), map.height(), map.labels().to_vec())
}
