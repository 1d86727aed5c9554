//! Single-scale sliding-window detection, over whole frames or over
//! salience-windowed frames where low-saliency windows are skipped.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::eval::{iou, Rect};
use crate::hog::{check_stride, CellCache, HogConfig};
use crate::image::GrayImage;
use crate::saliency::{apply_window, IntegralMap, SaliencyMap};
use crate::svm::LinearSvmModel;

/// A positively classified window.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub score: f64,
    /// HOG descriptor of the window; empty when read back from a detections file.
    pub features: Vec<f64>,
}

impl Detection {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub stride: usize,
    /// Windows whose mean saliency is below this are not classified.
    pub tau: f64,
    /// Greedy NMS overlap cutoff; `None` disables suppression.
    pub nms_iou: Option<f64>,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            stride: 8,
            tau: 0.2,
            nms_iou: None,
        }
    }
}

impl DetectParams {
    pub fn validate(&self, hog: &HogConfig) -> Result<()> {
        hog.validate()?;
        check_stride(hog, self.stride)?;
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if let Some(c) = self.nms_iou {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Config(format!("NMS IoU must lie in (0, 1), got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectStats {
    pub windows_total: usize,
    pub windows_classified: usize,
    pub wall_time: Duration,
}

/// Top-left corners of every `win_w`x`win_h` window on a `stride` lattice that
/// fits inside the frame, row by row.
pub fn sliding_windows(
    frame_w: usize,
    frame_h: usize,
    win_w: usize,
    win_h: usize,
    stride: usize,
) -> Vec<(usize, usize)> {
    if win_w == 0 || win_h == 0 || stride == 0 || win_w > frame_w || win_h > frame_h {
        return Vec::new();
    }
    let xs: Vec<usize> = (0..=frame_w - win_w).step_by(stride).collect();
    (0..=frame_h - win_h)
        .step_by(stride)
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

fn check_model(model: &LinearSvmModel, hog: &HogConfig) -> Result<()> {
    if model.dim != hog.descriptor_len() {
        return Err(Error::Shape(format!(
            "model expects {} features but the HOG configuration yields {}",
            model.dim,
            hog.descriptor_len()
        )));
    }
    Ok(())
}

/// Classifies the windows accepted by `keep`, returning positives in window order.
fn scan(
    image: &GrayImage,
    model: &LinearSvmModel,
    hog: &HogConfig,
    params: &DetectParams,
    frame: usize,
    mut keep: impl FnMut(usize, usize) -> Result<bool>,
) -> Result<(Vec<Detection>, DetectStats)> {
    let windows = sliding_windows(image.width(), image.height(), hog.window_w, hog.window_h, params.stride);
    let mut cache = CellCache::new(image, hog)?;
    let mut stats = DetectStats {
        windows_total: windows.len(),
        ..DetectStats::default()
    };
    let mut out = Vec::new();
    for (x, y) in windows {
        if !keep(x, y)? {
            continue;
        }
        stats.windows_classified += 1;
        let descriptor = cache.descriptor(x, y)?;
        let score = model.score(&descriptor.values)?;
        if score > model.threshold {
            out.push(Detection {
                frame,
                x,
                y,
                w: hog.window_w,
                h: hog.window_h,
                score,
                features: descriptor.values,
            });
        }
    }
    if let Some(cutoff) = params.nms_iou {
        out = nms(out, cutoff);
    }
    Ok((out, stats))
}

/// Classifies every sliding window of the frame.
pub fn detect_full(
    image: &GrayImage,
    model: &LinearSvmModel,
    hog: &HogConfig,
    params: &DetectParams,
    frame: usize,
) -> Result<Vec<Detection>> {
    detect_full_with_stats(image, model, hog, params, frame).map(|(d, _)| d)
}

pub fn detect_full_with_stats(
    image: &GrayImage,
    model: &LinearSvmModel,
    hog: &HogConfig,
    params: &DetectParams,
    frame: usize,
) -> Result<(Vec<Detection>, DetectStats)> {
    params.validate(hog)?;
    check_model(model, hog)?;
    let start = Instant::now();
    let (dets, mut stats) = scan(image, model, hog, params, frame, |_, _| Ok(true))?;
    stats.wall_time = start.elapsed();
    Ok((dets, stats))
}

/// Multiplies the frame by `map`, then classifies only windows whose mean
/// saliency is at least `params.tau`, computing HOG on the windowed pixels.
pub fn detect_salient(
    image: &GrayImage,
    map: &SaliencyMap,
    model: &LinearSvmModel,
    hog: &HogConfig,
    params: &DetectParams,
    frame: usize,
) -> Result<(Vec<Detection>, DetectStats)> {
    params.validate(hog)?;
    check_model(model, hog)?;
    let start = Instant::now();
    let windowed = apply_window(image, map)?;
    let integral = IntegralMap::new(map);
    let (w, h, tau) = (hog.window_w, hog.window_h, params.tau);
    let (dets, mut stats) = scan(&windowed, model, hog, params, frame, |x, y| {
        Ok(integral.mean(x, y, w, h)? >= tau)
    })?;
    stats.wall_time = start.elapsed();
    Ok((dets, stats))
}

/// Greedy non-maximum suppression.
///
/// Candidates are visited by descending score (ties: smaller `y`, then smaller
/// `x`); one is kept iff its IoU with every kept detection is at most
/// `iou_cutoff`. Survivors keep their input order.
pub fn nms(detections: Vec<Detection>, iou_cutoff: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.score
            .total_cmp(&da.score)
            .then(da.y.cmp(&db.y))
            .then(da.x.cmp(&db.x))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let r = detections[i].rect();
        if kept.iter().all(|&k| iou(&detections[k].rect(), &r) <= iou_cutoff) {
            kept.push(i);
        }
    }
    let mut keep_flags = vec![false; detections.len()];
    for k in kept {
        keep_flags[k] = true;
    }
    detections
        .into_iter()
        .zip(keep_flags)
        .filter_map(|(d, k)| k.then_some(d))
        .collect()
}
