//! Histogram of oriented gradients.
//!
//! The pipeline is the classic one: centred `[-1, 0, 1]` gradients with
//! replicated borders, magnitude-weighted votes into unsigned orientation bins
//! (linear interpolation between the two nearest bin centres, no spatial
//! interpolation), and L2-Hys normalisation over overlapping blocks.
//!
//! Gradients are always taken on the whole image, so a window's descriptor
//! depends only on where it sits, never on how it was cropped. Dense
//! extraction and [`CellCache`] share cell histograms between windows and are
//! bit-for-bit equal to [`hog_window`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_rect, GrayImage};

/// Regulariser in `v / sqrt(|v|^2 + eps^2)`.
pub const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HogConfig {
    pub window_w: usize,
    pub window_h: usize,
    /// Side of a square cell, in pixels.
    pub cell: usize,
    /// Side of a square block, in cells.
    pub block: usize,
    /// Offset between neighbouring blocks, in pixels.
    pub block_stride: usize,
    pub bins: usize,
    /// L2-Hys clipping value.
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            window_w: 64,
            window_h: 128,
            cell: 8,
            block: 2,
            block_stride: 8,
            bins: 9,
            clip: 0.2,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.cell == 0 {
            problems.push("cell size must be positive".to_string());
        }
        if self.block == 0 {
            problems.push("block size must be positive".to_string());
        }
        if self.bins < 2 {
            problems.push(format!("need at least 2 bins, got {}", self.bins));
        }
        if !(self.clip > 0.0 && self.clip <= 1.0) {
            problems.push(format!("clip must lie in (0, 1], got {}", self.clip));
        }
        if problems.is_empty() {
            if self.window_w == 0 || self.window_h == 0 {
                problems.push("window must be non-empty".to_string());
            }
            if !self.window_w.is_multiple_of(self.cell) || !self.window_h.is_multiple_of(self.cell) {
                problems.push(format!(
                    "window {}x{} is not a multiple of cell {}",
                    self.window_w, self.window_h, self.cell
                ));
            }
            if self.block_stride == 0 || !self.block_stride.is_multiple_of(self.cell) {
                problems.push(format!(
                    "block stride {} is not a positive multiple of cell {}",
                    self.block_stride, self.cell
                ));
            }
        }
        if problems.is_empty() {
            let step = self.block_stride / self.cell;
            for (axis, cells) in [("width", self.cells_x()), ("height", self.cells_y())] {
                if cells < self.block {
                    problems.push(format!(
                        "block of {} cells does not fit the window {axis} ({cells} cells)",
                        self.block
                    ));
                } else if !(cells - self.block).is_multiple_of(step) {
                    problems.push(format!(
                        "blocks do not tile the window {axis}: ({cells} - {}) is not a multiple of {step}",
                        self.block
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("HOG: {}", problems.join("; "))))
        }
    }

    pub fn cells_x(&self) -> usize {
        self.window_w / self.cell
    }

    pub fn cells_y(&self) -> usize {
        self.window_h / self.cell
    }

    pub fn blocks_x(&self) -> usize {
        (self.window_w - self.block * self.cell) / self.block_stride + 1
    }

    pub fn blocks_y(&self) -> usize {
        (self.window_h - self.block * self.cell) / self.block_stride + 1
    }

    pub fn block_len(&self) -> usize {
        self.block * self.block * self.bins
    }

    pub fn descriptor_len(&self) -> usize {
        self.blocks_x() * self.blocks_y() * self.block_len()
    }
}

/// Per-pixel gradient magnitude and unsigned orientation in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    /// Degrees in `[0, 180)`.
    pub orientation: Vec<f64>,
}

/// Gradient at a single pixel; the building block of every HOG path.
#[inline]
pub fn pixel_gradient(image: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (w, h) = (image.width(), image.height());
    let left = image.get(x.saturating_sub(1), y) as f64;
    let right = image.get((x + 1).min(w - 1), y) as f64;
    let up = image.get(x, y.saturating_sub(1)) as f64;
    let down = image.get(x, (y + 1).min(h - 1)) as f64;
    let gx = right - left;
    let gy = down - up;
    let magnitude = (gx * gx + gy * gy).sqrt();
    (magnitude, unsigned_orientation(gx, gy))
}

/// `atan2` folded into `[0, 180)` degrees.
#[inline]
pub fn unsigned_orientation(gx: f64, gy: f64) -> f64 {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    // normalises -0.0
    deg + 0.0
}

pub fn compute_gradients(image: &GrayImage) -> GradientField {
    let (w, h) = (image.width(), image.height());
    let mut magnitude = Vec::with_capacity(w * h);
    let mut orientation = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (m, o) = pixel_gradient(image, x, y);
            magnitude.push(m);
            orientation.push(o);
        }
    }
    GradientField {
        width: w,
        height: h,
        magnitude,
        orientation,
    }
}

/// Splits `magnitude` between the two orientation bins whose centres, at
/// `(i + 0.5) * 180 / bins`, bracket `orientation`. Bin 0 and the last bin are
/// neighbours.
#[inline]
pub fn vote(hist: &mut [f64], magnitude: f64, orientation: f64) {
    let bins = hist.len();
    let pos = orientation * bins as f64 / 180.0 - 0.5;
    let lo = pos.floor();
    let frac = pos - lo;
    let b0 = (lo as isize).rem_euclid(bins as isize) as usize;
    let b1 = (b0 + 1) % bins;
    hist[b0] += magnitude * (1.0 - frac);
    hist[b1] += magnitude * frac;
}

/// Row-major grid of per-cell orientation histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl CellGrid {
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.values[start..start + self.bins]
    }
}

fn accumulate_cells(
    grad: &GradientField,
    ox: usize,
    oy: usize,
    cells_x: usize,
    cells_y: usize,
    cell: usize,
    bins: usize,
) -> CellGrid {
    let mut values = vec![0.0; cells_x * cells_y * bins];
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let start = (cy * cells_x + cx) * bins;
            let hist = &mut values[start..start + bins];
            for py in oy + cy * cell..oy + (cy + 1) * cell {
                for px in ox + cx * cell..ox + (cx + 1) * cell {
                    let i = py * grad.width + px;
                    vote(hist, grad.magnitude[i], grad.orientation[i]);
                }
            }
        }
    }
    CellGrid {
        cells_x,
        cells_y,
        bins,
        values,
    }
}

/// Histograms of every cell of the window whose top-left corner is `origin`.
pub fn cell_histograms(
    grad: &GradientField,
    origin: (usize, usize),
    config: &HogConfig,
) -> Result<CellGrid> {
    config.validate()?;
    let (ox, oy) = origin;
    check_rect(ox, oy, config.window_w, config.window_h, grad.width, grad.height)?;
    Ok(accumulate_cells(
        grad,
        ox,
        oy,
        config.cells_x(),
        config.cells_y(),
        config.cell,
        config.bins,
    ))
}

/// Final feature vector of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f64>,
    pub config: HogConfig,
}

/// Writes the L2-Hys-normalised blocks of one window into `out`.
///
/// `cell(cx, cy)` returns the histogram of the window-relative cell.
fn normalize_blocks<'a>(
    config: &HogConfig,
    cell: impl Fn(usize, usize) -> &'a [f64],
    out: &mut Vec<f64>,
) {
    let step = config.block_stride / config.cell;
    let block_len = config.block_len();
    for by in 0..config.blocks_y() {
        for bx in 0..config.blocks_x() {
            let start = out.len();
            for cy in 0..config.block {
                for cx in 0..config.block {
                    out.extend_from_slice(cell(bx * step + cx, by * step + cy));
                }
            }
            let v = &mut out[start..start + block_len];
            l2_normalize(v);
            for x in v.iter_mut() {
                if *x > config.clip {
                    *x = config.clip;
                }
            }
            l2_normalize(v);
        }
    }
}

#[inline]
fn l2_normalize(v: &mut [f64]) {
    let sq: f64 = v.iter().map(|x| x * x).sum();
    let norm = (sq + NORM_EPS * NORM_EPS).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

pub fn block_normalize(cells: &CellGrid, config: &HogConfig) -> Result<HogDescriptor> {
    config.validate()?;
    if cells.cells_x != config.cells_x()
        || cells.cells_y != config.cells_y()
        || cells.bins != config.bins
    {
        return Err(Error::Shape(format!(
            "cell grid {}x{}x{} does not match config {}x{}x{}",
            cells.cells_x,
            cells.cells_y,
            cells.bins,
            config.cells_x(),
            config.cells_y(),
            config.bins
        )));
    }
    let mut values = Vec::with_capacity(config.descriptor_len());
    normalize_blocks(config, |cx, cy| cells.cell(cx, cy), &mut values);
    Ok(HogDescriptor {
        values,
        config: *config,
    })
}

/// Descriptor of the window with top-left corner (`x`, `y`).
pub fn hog_window(image: &GrayImage, x: usize, y: usize, config: &HogConfig) -> Result<HogDescriptor> {
    config.validate()?;
    check_rect(x, y, config.window_w, config.window_h, image.width(), image.height())?;
    let grad = compute_gradients(image);
    let cells = cell_histograms(&grad, (x, y), config)?;
    block_normalize(&cells, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseEntry {
    pub x: usize,
    pub y: usize,
    pub descriptor: HogDescriptor,
}

/// Descriptors at every in-bounds window position on a `stride` lattice,
/// row-major. `stride` must be a multiple of the cell size so that windows
/// share one image-wide cell grid.
pub fn hog_dense(image: &GrayImage, config: &HogConfig, stride: usize) -> Result<Vec<DenseEntry>> {
    config.validate()?;
    check_stride(config, stride)?;
    let positions = crate::detector::sliding_windows(
        image.width(),
        image.height(),
        config.window_w,
        config.window_h,
        stride,
    );
    if positions.is_empty() {
        return Ok(Vec::new());
    }
    let grad = compute_gradients(image);
    let grid = accumulate_cells(
        &grad,
        0,
        0,
        image.width() / config.cell,
        image.height() / config.cell,
        config.cell,
        config.bins,
    );
    let out = positions
        .into_iter()
        .map(|(x, y)| {
            let (gx, gy) = (x / config.cell, y / config.cell);
            let mut values = Vec::with_capacity(config.descriptor_len());
            normalize_blocks(config, |cx, cy| grid.cell(gx + cx, gy + cy), &mut values);
            DenseEntry {
                x,
                y,
                descriptor: HogDescriptor {
                    values,
                    config: *config,
                },
            }
        })
        .collect();
    Ok(out)
}

pub(crate) fn check_stride(config: &HogConfig, stride: usize) -> Result<()> {
    if stride == 0 || !stride.is_multiple_of(config.cell) {
        return Err(Error::Config(format!(
            "stride {stride} must be a positive multiple of the HOG cell size {}",
            config.cell
        )));
    }
    Ok(())
}

/// Lazily filled image-wide cell grid.
///
/// Cells are computed from the image on first use, straight from
/// [`pixel_gradient`], so windows that are never requested cost nothing.
/// Results are identical to [`hog_window`] at every cell-aligned position.
pub struct CellCache<'a> {
    image: &'a GrayImage,
    config: HogConfig,
    cells_x: usize,
    values: Vec<f64>,
    ready: Vec<bool>,
}

impl<'a> CellCache<'a> {
    pub fn new(image: &'a GrayImage, config: &HogConfig) -> Result<Self> {
        config.validate()?;
        let cells_x = image.width() / config.cell;
        let cells_y = image.height() / config.cell;
        Ok(Self {
            image,
            config: *config,
            cells_x,
            values: vec![0.0; cells_x * cells_y * config.bins],
            ready: vec![false; cells_x * cells_y],
        })
    }

    fn fill_cell(&mut self, cx: usize, cy: usize) {
        let idx = cy * self.cells_x + cx;
        if self.ready[idx] {
            return;
        }
        let (cell, bins) = (self.config.cell, self.config.bins);
        let hist = &mut self.values[idx * bins..(idx + 1) * bins];
        for py in cy * cell..(cy + 1) * cell {
            for px in cx * cell..(cx + 1) * cell {
                let (m, o) = pixel_gradient(self.image, px, py);
                vote(hist, m, o);
            }
        }
        self.ready[idx] = true;
    }

    /// Descriptor of the window at (`x`, `y`); both must be multiples of the cell size.
    pub fn descriptor(&mut self, x: usize, y: usize) -> Result<HogDescriptor> {
        let cfg = self.config;
        check_rect(x, y, cfg.window_w, cfg.window_h, self.image.width(), self.image.height())?;
        if !x.is_multiple_of(cfg.cell) || !y.is_multiple_of(cfg.cell) {
            return Err(Error::Config(format!(
                "window origin ({x}, {y}) is not aligned to cell size {}",
                cfg.cell
            )));
        }
        let (gx, gy) = (x / cfg.cell, y / cfg.cell);
        for cy in gy..gy + cfg.cells_y() {
            for cx in gx..gx + cfg.cells_x() {
                self.fill_cell(cx, cy);
            }
        }
        let (cells_x, bins) = (self.cells_x, cfg.bins);
        let values_ref = &self.values;
        let mut values = Vec::with_capacity(cfg.descriptor_len());
        normalize_blocks(
            &cfg,
            |cx, cy| {
                let idx = (gy + cy) * cells_x + gx + cx;
                &values_ref[idx * bins..(idx + 1) * bins]
            },
            &mut values,
        );
        Ok(HogDescriptor { values, config: cfg })
    }
}
