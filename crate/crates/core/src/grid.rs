//! Initial segment layouts for SUTP: a regular grid or a quadtree grid.
//!
//! The quadtree works in units of the regular grid's cells: the image is first
//! cut into `min_cell` columns and rows exactly as [`regular_grid`] would, and
//! quadtree nodes are square blocks of those cells on a virtual canvas padded
//! up to a multiple of the top-level tile. Leaves are clipped to the image, so
//! every quadtree leaf is a union of regular-grid cells.

use crate::color::LabImage;
use crate::{Error, Result};

/// Rectangle `[x0, x1) x [y0, y1)` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridCell {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl GridCell {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Regular,
    Quadtree,
}

/// An exact tiling of the image by rectangular cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    width: usize,
    height: usize,
    kind: GridKind,
    cells: Vec<GridCell>,
}

impl Grid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row-major per-pixel cell index.
    pub fn label_map(&self) -> Vec<u32> {
        let mut labels = vec![u32::MAX; self.width * self.height];
        for (id, c) in self.cells.iter().enumerate() {
            for y in c.y0..c.y1 {
                labels[y * self.width + c.x0..y * self.width + c.x1].fill(id as u32);
            }
        }
        labels
    }
}

/// Split `len` pixels into spans of `s`. A trailing remainder narrower than
/// `s / 2` widens the last span, otherwise it becomes its own span. An axis
/// shorter than `s` is one span.
fn axis_spans(len: usize, s: usize) -> Vec<(usize, usize)> {
    let full = len / s;
    if full == 0 {
        return vec![(0, len)];
    }
    let mut spans: Vec<(usize, usize)> = (0..full).map(|i| (i * s, (i + 1) * s)).collect();
    let rem = len % s;
    if rem > 0 {
        if 2 * rem < s {
            spans.last_mut().unwrap().1 = len;
        } else {
            spans.push((full * s, len));
        }
    }
    spans
}

pub fn regular_grid(width: usize, height: usize, s: usize) -> Result<Grid> {
    if s < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid cell size must be at least 2, got {s}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("empty image".into()));
    }
    let xs = axis_spans(width, s);
    let ys = axis_spans(height, s);
    let cells = ys
        .iter()
        .flat_map(|&(y0, y1)| xs.iter().map(move |&(x0, x1)| GridCell { x0, y0, x1, y1 }))
        .collect();
    Ok(Grid {
        width,
        height,
        kind: GridKind::Regular,
        cells,
    })
}

/// Mean squared Euclidean deviation of the cell's Lab values from their mean.
pub fn cell_variance(img: &LabImage, cell: &GridCell) -> f64 {
    // Values are shifted by the first pixel so a flat cell yields exactly 0.
    let origin = img.get(cell.x0, cell.y0);
    let n = cell.area() as f64;
    let (mut sl, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for y in cell.y0..cell.y1 {
        for x in cell.x0..cell.x1 {
            let p = img.get(x, y);
            sl += p.l - origin.l;
            sa += p.a - origin.a;
            sb += p.b - origin.b;
        }
    }
    let (ml, ma, mb) = (sl / n, sa / n, sb / n);
    let mut acc = 0.0;
    for y in cell.y0..cell.y1 {
        for x in cell.x0..cell.x1 {
            let p = img.get(x, y);
            let dl = p.l - origin.l - ml;
            let da = p.a - origin.a - ma;
            let db = p.b - origin.b - mb;
            acc += dl * dl + da * da + db * db;
        }
    }
    acc / n
}

/// Quadtree parameters. Defaults: 80 px top-level tiles, 10 px leaves,
/// split while the Lab variance exceeds 25.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadtreeParams {
    pub max_cell: usize,
    pub min_cell: usize,
    pub var_thresh: f64,
}

impl Default for QuadtreeParams {
    fn default() -> Self {
        Self {
            max_cell: 80,
            min_cell: 10,
            var_thresh: 25.0,
        }
    }
}

impl QuadtreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cell < 2 {
            return Err(Error::InvalidParameter(format!(
                "min_cell must be at least 2, got {}",
                self.min_cell
            )));
        }
        if self.max_cell < self.min_cell
            || !self.max_cell.is_multiple_of(self.min_cell)
            || !(self.max_cell / self.min_cell).is_power_of_two()
        {
            return Err(Error::InvalidParameter(format!(
                "max_cell {} must be min_cell {} times a power of two",
                self.max_cell, self.min_cell
            )));
        }
        if !(self.var_thresh >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "var_thresh must be non-negative, got {}",
                self.var_thresh
            )));
        }
        Ok(())
    }
}

struct QuadtreeBuilder<'a> {
    img: &'a LabImage,
    xs: Vec<(usize, usize)>,
    ys: Vec<(usize, usize)>,
    var_thresh: f64,
    cells: Vec<GridCell>,
}

impl QuadtreeBuilder<'_> {
    /// `(cx, cy, side)` is a square block of base cells on the virtual canvas.
    fn visit(&mut self, cx: usize, cy: usize, side: usize) {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        if cx >= nx || cy >= ny {
            return;
        }
        let cx1 = (cx + side).min(nx);
        let cy1 = (cy + side).min(ny);
        let cell = GridCell {
            x0: self.xs[cx].0,
            x1: self.xs[cx1 - 1].1,
            y0: self.ys[cy].0,
            y1: self.ys[cy1 - 1].1,
        };
        if side > 1 && cell_variance(self.img, &cell) > self.var_thresh {
            let half = side / 2;
            self.visit(cx, cy, half);
            self.visit(cx + half, cy, half);
            self.visit(cx, cy + half, half);
            self.visit(cx + half, cy + half, half);
        } else {
            self.cells.push(cell);
        }
    }
}

pub fn quadtree_grid(img: &LabImage, params: &QuadtreeParams) -> Result<Grid> {
    params.validate()?;
    let mut builder = QuadtreeBuilder {
        img,
        xs: axis_spans(img.width(), params.min_cell),
        ys: axis_spans(img.height(), params.min_cell),
        var_thresh: params.var_thresh,
        cells: Vec::new(),
    };
    let tile = params.max_cell / params.min_cell;
    for ty in (0..builder.ys.len()).step_by(tile) {
        for tx in (0..builder.xs.len()).step_by(tile) {
            builder.visit(tx, ty, tile);
        }
    }
    Ok(Grid {
        width: img.width(),
        height: img.height(),
        kind: GridKind::Quadtree,
        cells: builder.cells,
    })
}
