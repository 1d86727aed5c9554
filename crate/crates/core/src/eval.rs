//! Box matching, precision/recall, and the full-vs-salient benchmark.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::detector::{detect_full_with_stats, detect_salient, DetectParams, Detection};
use crate::error::{Error, Result};
use crate::hog::HogConfig;
use crate::image::GrayImage;
use crate::saliency::{SaliencyMap, SaliencyProvider};
use crate::svm::LinearSvmModel;

/// Axis-aligned pixel box covering `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x));
    let iy = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruthBox {
    pub frame: usize,
    pub rect: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub wall_time_s: f64,
    pub windows_classified: usize,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            ..Self::default()
        }
    }
}

/// Greedy per-frame matching.
///
/// Detections are taken in descending score (ties keep input order); each is
/// paired with the still-unmatched truth box of highest IoU (ties: lower truth
/// index) and counts as a true positive iff that IoU reaches `iou_cutoff`.
pub fn match_and_score(detections: &[Detection], truth: &[GroundTruthBox], iou_cutoff: f64) -> EvalReport {
    let mut by_frame: BTreeMap<usize, (Vec<&Detection>, Vec<Rect>)> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().0.push(d);
    }
    for t in truth {
        by_frame.entry(t.frame).or_default().1.push(t.rect);
    }

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (_, (mut dets, boxes)) in by_frame {
        // stable sort keeps input order among equal scores
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut taken = vec![false; boxes.len()];
        for d in dets {
            let r = d.rect();
            let best = boxes
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .map(|(i, b)| (i, iou(&r, b)))
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                });
            match best {
                Some((i, v)) if v >= iou_cutoff => {
                    taken[i] = true;
                    tp += 1;
                }
                _ => fp += 1,
            }
        }
        fn_ += taken.iter().filter(|&&t| !t).count();
    }
    EvalReport::from_counts(tp, fp, fn_)
}

/// One frame of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchFrame {
    pub index: usize,
    pub stem: String,
    pub image: GrayImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub frames: usize,
    pub full: EvalReport,
    pub salient: EvalReport,
    pub saliency_time_s: f64,
    pub workers: usize,
    pub provider: String,
    pub tau: f64,
}

impl BenchReport {
    /// Full-path time over salient-path time.
    pub fn time_ratio(&self) -> f64 {
        self.full.wall_time_s / self.salient.wall_time_s
    }

    /// Salient-path windows classified over full-path windows classified.
    pub fn windows_ratio(&self) -> f64 {
        self.salient.windows_classified as f64 / self.full.windows_classified as f64
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let pct = |v: f64| format!("{:.2}%", 100.0 * v);
        let row = |s: &mut String, label: &str, a: String, b: String| {
            writeln!(s, "{label:<36}{a:>18}{b:>28}").unwrap();
        };
        writeln!(s, "Comparison of Results ({} frames, provider {}, tau {})", self.frames, self.provider, self.tau).unwrap();
        row(&mut s, "Parameters", "Normal Images".into(), "Saliency-windowed Images".into());
        row(
            &mut s,
            "Execution Time (in seconds)",
            format!("{:.6}", self.full.wall_time_s),
            format!("{:.6}", self.salient.wall_time_s),
        );
        row(&mut s, "Precision", pct(self.full.precision), pct(self.salient.precision));
        row(&mut s, "Recall", pct(self.full.recall), pct(self.salient.recall));
        row(
            &mut s,
            "Windows Classified",
            self.full.windows_classified.to_string(),
            self.salient.windows_classified.to_string(),
        );
        row(
            &mut s,
            "TP / FP / FN",
            format!("{} / {} / {}", self.full.tp, self.full.fp, self.full.fn_),
            format!("{} / {} / {}", self.salient.tp, self.salient.fp, self.salient.fn_),
        );
        row(
            &mut s,
            "Saliency Computation (in seconds)",
            "-".into(),
            format!("{:.6}", self.saliency_time_s),
        );
        writeln!(s, "time ratio (full / salient): {:.3}", self.time_ratio()).unwrap();
        writeln!(s, "windows ratio (salient / full): {:.4}", self.windows_ratio()).unwrap();
        writeln!(s, "workers: {}", self.workers).unwrap();
        s
    }
}

/// Detects on one frame, returning detections and windows classified.
type FramePass<'a> = dyn Fn(&BenchFrame, usize) -> Result<(Vec<Detection>, usize)> + Sync + 'a;

/// Runs both detector paths over `frames` and scores them against `truth`.
///
/// Saliency maps are computed first and timed separately; each path's time
/// covers its detection work over all frames. With `workers > 1` frames are
/// processed on a thread pool of that size.
#[allow(clippy::too_many_arguments)]
pub fn bench_compare(
    frames: &[BenchFrame],
    provider: &dyn SaliencyProvider,
    truth: &[GroundTruthBox],
    model: &LinearSvmModel,
    hog: &HogConfig,
    params: &DetectParams,
    iou_cutoff: f64,
    workers: usize,
) -> Result<BenchReport> {
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;

    let run = |f: &FramePass| {
        pool.install(|| -> Result<(Vec<Detection>, usize, f64)> {
            let start = Instant::now();
            let per_frame: Vec<_> = if workers == 1 {
                frames.iter().enumerate().map(|(i, fr)| f(fr, i)).collect::<Result<_>>()?
            } else {
                frames.par_iter().enumerate().map(|(i, fr)| f(fr, i)).collect::<Result<_>>()?
            };
            let elapsed = start.elapsed().as_secs_f64();
            let mut dets = Vec::new();
            let mut classified = 0;
            for (d, c) in per_frame {
                dets.extend(d);
                classified += c;
            }
            Ok((dets, classified, elapsed))
        })
    };

    let start = Instant::now();
    let maps: Vec<SaliencyMap> = pool.install(|| {
        frames
            .par_iter()
            .map(|fr| provider.compute(&fr.stem, &fr.image))
            .collect::<Result<_>>()
    })?;
    let saliency_time_s = start.elapsed().as_secs_f64();

    let (full_dets, full_windows, full_time) = run(&|fr, _| {
        let (d, stats) = detect_full_with_stats(&fr.image, model, hog, params, fr.index)?;
        Ok((d, stats.windows_classified))
    })?;
    let (sal_dets, sal_windows, sal_time) = run(&|fr, i| {
        let (d, stats) = detect_salient(&fr.image, &maps[i], model, hog, params, fr.index)?;
        Ok((d, stats.windows_classified))
    })?;

    let mut full = match_and_score(&full_dets, truth, iou_cutoff);
    full.wall_time_s = full_time;
    full.windows_classified = full_windows;
    let mut salient = match_and_score(&sal_dets, truth, iou_cutoff);
    salient.wall_time_s = sal_time;
    salient.windows_classified = sal_windows;

    Ok(BenchReport {
        frames: frames.len(),
        full,
        salient,
        saliency_time_s,
        workers,
        provider: provider.name(),
        tau: params.tau,
    })
}
