//! Shared fixtures for the integration tests: independent reference
//! implementations and a synthetic pedestrian corpus.
#![allow(dead_code)]

use hogtrack::eval::{GroundTruthBox, Rect};
use hogtrack::hog::HogConfig;
use hogtrack::svm::{Label, LabeledSample};
use hogtrack::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut r = rng(seed);
    GrayImage::from_fn(w, h, |_, _| r.random())
}

// ---------------------------------------------------------------------------
// Naive HOG: written straight from the definition, one window at a time, with
// no shared code paths with the library.

fn px(img: &GrayImage, x: i64, y: i64) -> f64 {
    let cx = x.clamp(0, img.width() as i64 - 1) as usize;
    let cy = y.clamp(0, img.height() as i64 - 1) as usize;
    img.pixels()[cy * img.width() + cx] as f64
}

/// (gx, gy) with the centred [-1, 0, 1] kernel and replicated borders.
pub fn naive_gradient(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (x, y) = (x as i64, y as i64);
    (px(img, x + 1, y) - px(img, x - 1, y), px(img, x, y + 1) - px(img, x, y - 1))
}

pub fn naive_hog(img: &GrayImage, x0: usize, y0: usize, cfg: &HogConfig) -> Vec<f64> {
    let ncx = cfg.window_w / cfg.cell;
    let ncy = cfg.window_h / cfg.cell;
    let bins = cfg.bins;
    let width = 180.0 / bins as f64;
    let mut cells = vec![vec![vec![0.0; bins]; ncx]; ncy];
    for (cy, row) in cells.iter_mut().enumerate() {
        for (cx, hist) in row.iter_mut().enumerate() {
            for dy in 0..cfg.cell {
                for dx in 0..cfg.cell {
                    let (gx, gy) = naive_gradient(img, x0 + cx * cfg.cell + dx, y0 + cy * cfg.cell + dy);
                    let mag = gx.hypot(gy);
                    let mut ang = gy.atan2(gx) * 180.0 / std::f64::consts::PI;
                    while ang < 0.0 {
                        ang += 180.0;
                    }
                    while ang >= 180.0 {
                        ang -= 180.0;
                    }
                    // distance to every bin centre, circularly
                    for (b, slot) in hist.iter_mut().enumerate() {
                        let centre = (b as f64 + 0.5) * width;
                        let mut d = (ang - centre).abs();
                        if d > 90.0 {
                            d = 180.0 - d;
                        }
                        if d < width {
                            *slot += mag * (1.0 - d / width);
                        }
                    }
                }
            }
        }
    }
    let step = cfg.block_stride / cfg.cell;
    let nbx = (ncx - cfg.block) / step + 1;
    let nby = (ncy - cfg.block) / step + 1;
    let eps2 = 1e-12;
    let mut out = Vec::new();
    for by in 0..nby {
        for bx in 0..nbx {
            let mut v = Vec::new();
            for cy in 0..cfg.block {
                for cx in 0..cfg.block {
                    v.extend_from_slice(&cells[by * step + cy][bx * step + cx]);
                }
            }
            let n = (v.iter().map(|a| a * a).sum::<f64>() + eps2).sqrt();
            let mut v: Vec<f64> = v.iter().map(|a| (a / n).min(cfg.clip)).collect();
            let n = (v.iter().map(|a| a * a).sum::<f64>() + eps2).sqrt();
            v.iter_mut().for_each(|a| *a /= n);
            out.extend(v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Brute-force k-means optimum over all set partitions.

fn partition_cost(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            p.iter()
                .zip(&sums[l])
                .map(|(v, s)| {
                    let m = s / counts[l] as f64;
                    (v - m) * (v - m)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Minimum within-cluster sum of squares over every partition of `points` into
/// at most `k` non-empty parts, by enumerating restricted growth strings.
pub fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    fn rec(i: usize, used: usize, k: usize, labels: &mut Vec<usize>, points: &[Vec<f64>], best: &mut f64) {
        if i == labels.len() {
            *best = best.min(partition_cost(points, labels, used.max(1)));
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), k, labels, points, best);
        }
    }
    rec(0, 0, k, &mut labels, points, &mut best);
    best
}

// ---------------------------------------------------------------------------
// Synthetic pedestrians.

/// Surface pattern painted on a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Plain,
    /// Horizontal bands of the given period.
    Bands(usize),
    /// Checkerboard of the given square size.
    Checks(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct Figure {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub value: u8,
    pub texture: Texture,
}

/// Whether window-relative (u, v) in [0,1)^2 lies on the stick figure.
fn on_figure(u: f64, v: f64) -> bool {
    let head = (u - 0.5).powi(2) / 0.016 + (v - 0.12).powi(2) / 0.005 <= 1.0;
    let torso = (0.32..0.68).contains(&u) && (0.21..0.58).contains(&v);
    let arms = ((0.2..0.3).contains(&u) || (0.7..0.8).contains(&u)) && (0.23..0.52).contains(&v);
    let legs = ((0.34..0.47).contains(&u) || (0.53..0.66).contains(&u)) && (0.58..0.94).contains(&v);
    head || torso || arms || legs
}

pub fn draw_figure(img: &mut GrayImage, f: &Figure) {
    for y in f.y..(f.y + f.h).min(img.height()) {
        for x in f.x..(f.x + f.w).min(img.width()) {
            let u = (x - f.x) as f64 / f.w as f64;
            let v = (y - f.y) as f64 / f.h as f64;
            if !on_figure(u, v) {
                continue;
            }
            let shade = match f.texture {
                Texture::Plain => 0,
                Texture::Bands(p) => ((y - f.y) / p % 2) as i32,
                Texture::Checks(p) => (((x - f.x) / p + (y - f.y) / p) % 2) as i32,
            };
            let value = if shade == 1 { f.value as i32 / 2 } else { f.value as i32 };
            img.set(x, y, value as u8);
        }
    }
}

/// Mildly noisy background with a faint horizontal ramp.
pub fn background(w: usize, h: usize, r: &mut ChaCha8Rng) -> GrayImage {
    let base: i32 = r.random_range(40..90);
    GrayImage::from_fn(w, h, |x, _| {
        let v = base + (x * 20 / w) as i32 + r.random_range(-6..=6);
        v.clamp(0, 255) as u8
    })
}

/// Scatters rectangles and bars that are not pedestrians.
pub fn clutter(img: &mut GrayImage, r: &mut ChaCha8Rng, count: usize) {
    let (w, h) = (img.width(), img.height());
    for _ in 0..count {
        let bw = r.random_range(2..=(w / 2).max(3));
        let bh = r.random_range(2..=(h / 3).max(3));
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let value: u8 = r.random_range(0..=255);
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                img.set(x, y, value);
            }
        }
    }
}

/// One training crop: a figure filling the window, or a background patch.
pub fn crop(w: usize, h: usize, positive: bool, r: &mut ChaCha8Rng) -> GrayImage {
    let mut img = background(w, h, r);
    if positive {
        // figures between 13/16 of the window and the full window, anywhere inside it
        let fw = r.random_range(w * 13 / 16..=w);
        let fh = r.random_range(h * 13 / 16..=h);
        let textures = [Texture::Plain, Texture::Bands(h / 16), Texture::Checks(w / 8)];
        let f = Figure {
            x: r.random_range(0..=w - fw),
            y: r.random_range(0..=h - fh),
            w: fw,
            h: fh,
            value: r.random_range(170..=250),
            texture: textures[r.random_range(0..3)],
        };
        draw_figure(&mut img, &f);
    } else {
        let n = r.random_range(0..4);
        clutter(&mut img, r, n);
    }
    img
}

/// `n_pos` positive and `n_neg` negative crops, interleaved.
pub fn crop_corpus(cfg: &HogConfig, n_pos: usize, n_neg: usize, seed: u64) -> Vec<(GrayImage, Label)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let total = n_pos + n_neg;
    let (mut p, mut q) = (0, 0);
    for i in 0..total {
        let positive = (i % 2 == 0 && p < n_pos) || q >= n_neg;
        if positive {
            p += 1;
        } else {
            q += 1;
        }
        out.push((crop(cfg.window_w, cfg.window_h, positive, &mut r), Label::from_bool(positive)));
    }
    out
}

pub fn hog_samples(corpus: &[(GrayImage, Label)], cfg: &HogConfig) -> Vec<LabeledSample> {
    corpus
        .iter()
        .map(|(img, label)| {
            let d = hogtrack::hog_window(img, 0, 0, cfg).unwrap();
            LabeledSample::new(d.values, *label)
        })
        .collect()
}

/// A frame with figures planted at the given boxes, plus their truth boxes.
pub fn scene(
    w: usize,
    h: usize,
    figures: &[Figure],
    frame: usize,
    clutter_count: usize,
    r: &mut ChaCha8Rng,
) -> (GrayImage, Vec<GroundTruthBox>) {
    let mut img = background(w, h, r);
    clutter(&mut img, r, clutter_count);
    let mut truth = Vec::new();
    for f in figures {
        draw_figure(&mut img, f);
        truth.push(GroundTruthBox {
            frame,
            rect: Rect::new(f.x, f.y, f.w, f.h),
        });
    }
    (img, truth)
}
