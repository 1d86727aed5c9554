//! Saliency maps as region proposals.
//!
//! A map is a per-pixel attention estimate in `[0, 1]`. Maps come from a
//! [`SaliencyProvider`]: the built-in spectral-residual estimator or files
//! written by an external model. Multiplying a frame by its map gives the
//! salience-windowed frame the detector classifies.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2d, Direction};
use crate::image::{check_rect, GrayImage};
use crate::pnm;

/// Below this spread a map is considered constant and normalises to zero.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values supplied for a {width}x{height} saliency map",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("positive dimensions")
    }

    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values).expect("positive dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    fn check_unit_range(&self) -> Result<()> {
        match self.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            None => Ok(()),
            Some(i) => Err(Error::Data(format!(
                "saliency value {} at index {i} is outside [0, 1]",
                self.values[i]
            ))),
        }
    }
}

/// Min-max rescale to `[0, 1]`; maps with spread below [`DEGENERATE_SPREAD`]
/// become all zero.
pub fn normalize_map(map: &SaliencyMap) -> Result<SaliencyMap> {
    if map.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("saliency map contains NaN or infinity".into()));
    }
    let min = map.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - min;
    let values = if spread < DEGENERATE_SPREAD {
        vec![0.0; map.values.len()]
    } else {
        map.values.iter().map(|v| (v - min) / spread).collect()
    };
    SaliencyMap::new(map.width, map.height, values)
}

/// `floor(pixel * saliency + 0.5)`, clamped to the byte range.
pub fn apply_window(image: &GrayImage, map: &SaliencyMap) -> Result<GrayImage> {
    if image.width() != map.width || image.height() != map.height {
        return Err(Error::Shape(format!(
            "saliency map {}x{} does not match image {}x{}",
            map.width,
            map.height,
            image.width(),
            image.height()
        )));
    }
    map.check_unit_range()?;
    let pixels = image
        .pixels()
        .iter()
        .zip(&map.values)
        .map(|(&p, &s)| (p as f64 * s + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(image.width(), image.height(), pixels)
}

/// Mean over a rectangle by direct summation. See [`IntegralMap`] for repeated queries.
pub fn mean_saliency(map: &SaliencyMap, x: usize, y: usize, w: usize, h: usize) -> Result<f64> {
    check_rect(x, y, w, h, map.width, map.height)?;
    let mut sum = 0.0;
    for row in y..y + h {
        let start = row * map.width + x;
        sum += map.values[start..start + w].iter().sum::<f64>();
    }
    Ok(sum / (w * h) as f64)
}

/// Summed-area table over a saliency map.
#[derive(Debug, Clone)]
pub struct IntegralMap {
    width: usize,
    height: usize,
    // (width + 1) x (height + 1), zero first row and column
    sums: Vec<f64>,
}

impl IntegralMap {
    pub fn new(map: &SaliencyMap) -> Self {
        let (w, h) = (map.width, map.height);
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += map.values[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            sums,
        }
    }

    pub fn sum(&self, x: usize, y: usize, w: usize, h: usize) -> Result<f64> {
        check_rect(x, y, w, h, self.width, self.height)?;
        let s = self.width + 1;
        let at = |xx: usize, yy: usize| self.sums[yy * s + xx];
        Ok(at(x + w, y + h) - at(x, y + h) - at(x + w, y) + at(x, y))
    }

    pub fn mean(&self, x: usize, y: usize, w: usize, h: usize) -> Result<f64> {
        Ok(self.sum(x, y, w, h)? / (w * h) as f64)
    }
}

/// Spectral-residual saliency settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralResidual {
    pub blur_radius: usize,
    /// Side of the square working resolution; a power of two.
    pub resize_to: usize,
}

impl Default for SpectralResidual {
    fn default() -> Self {
        Self {
            blur_radius: 3,
            resize_to: 64,
        }
    }
}

/// Spectrum components smaller than this fraction of the largest amplitude
/// are treated as exact zeros (they carry only rounding noise).
const SPECTRUM_FLOOR: f64 = 1e-9;

pub fn spectral_residual(image: &GrayImage, blur_radius: usize, resize_to: usize) -> Result<SaliencyMap> {
    if resize_to == 0 || !resize_to.is_power_of_two() {
        return Err(Error::Config(format!(
            "spectral residual working size {resize_to} must be a power of two"
        )));
    }
    let n = resize_to;
    let small = area_resize(image, n, n);
    let mut spectrum: Vec<Complex64> = small.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2d(&mut spectrum, n, n, Direction::Forward)?;

    let amplitude: Vec<f64> = spectrum.iter().map(|c| c.norm()).collect();
    let peak = amplitude.iter().copied().fold(0.0, f64::max);
    let mut field = vec![0.0; n * n];
    if peak > 0.0 {
        let floor = peak * SPECTRUM_FLOOR;
        let valid: Vec<bool> = amplitude.iter().map(|&a| a > floor).collect();
        let log_amp: Vec<f64> = amplitude.iter().map(|&a| a.max(floor).ln()).collect();
        let smoothed = box3_wrapped(&log_amp, &valid, n);
        for i in 0..n * n {
            spectrum[i] = if amplitude[i] <= floor {
                Complex64::new(0.0, 0.0)
            } else {
                // exp(residual) with the original phase
                spectrum[i] / amplitude[i] * (log_amp[i] - smoothed[i]).exp()
            };
        }
        fft2d(&mut spectrum, n, n, Direction::Inverse)?;
        for (f, c) in field.iter_mut().zip(&spectrum) {
            *f = c.norm_sqr();
        }
        for _ in 0..3 {
            field = box_blur(&field, n, n, blur_radius);
        }
    }
    // bring the field to unit peak so the degeneracy check is relative to it
    let top = field.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        field.iter_mut().for_each(|f| *f /= top);
    }
    let up = bilinear_resize(&field, n, n, image.width(), image.height());
    normalize_map(&SaliencyMap::new(image.width(), image.height(), up)?)
}

/// Area-averaging resample of `image` to `w`x`h`.
fn area_resize(image: &GrayImage, w: usize, h: usize) -> Vec<f64> {
    let wx = area_weights(image.width(), w);
    let wy = area_weights(image.height(), h);
    let src_w = image.width();
    let mut rows = vec![0.0; w * image.height()];
    for sy in 0..image.height() {
        for (tx, taps) in wx.iter().enumerate() {
            rows[sy * w + tx] = taps
                .iter()
                .map(|&(sx, k)| k * image.pixels()[sy * src_w + sx] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for (ty, taps) in wy.iter().enumerate() {
        for tx in 0..w {
            out[ty * w + tx] = taps.iter().map(|&(sy, k)| k * rows[sy * w + tx]).sum();
        }
    }
    out
}

/// For each target index, the source indices it overlaps and their weights (summing to 1).
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|t| {
            let lo = t as f64 * scale;
            let hi = (t + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// 3x3 mean filter on a periodic `n`x`n` grid, averaging only `valid` entries.
///
/// Components that vanish exactly (a box whose width divides the grid puts
/// zeros all over its spectrum) would otherwise drag their neighbours' local
/// mean towards the floor and turn those neighbours into spurious peaks.
fn box3_wrapped(values: &[f64], valid: &[bool], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (mut s, mut count) = (0.0, 0usize);
            for dy in [n - 1, 0, 1] {
                for dx in [n - 1, 0, 1] {
                    let i = ((y + dy) % n) * n + (x + dx) % n;
                    if valid[i] {
                        s += values[i];
                        count += 1;
                    }
                }
            }
            out[y * n + x] = if count == 0 { values[y * n + x] } else { s / count as f64 };
        }
    }
    out
}

/// Separable mean filter of half-width `radius` with replicated edges.
fn box_blur(values: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let taps = (2 * radius + 1) as f64;
    let clamp = |i: isize, len: usize| i.clamp(0, len as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in -(radius as isize)..=radius as isize {
                s += values[y * w + clamp(x as isize + d, w)];
            }
            tmp[y * w + x] = s / taps;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for d in -(radius as isize)..=radius as isize {
                s += tmp[clamp(y as isize + d, h) * w + x];
            }
            out[y * w + x] = s / taps;
        }
    }
    out
}

/// Bilinear resample with pixel centres aligned.
fn bilinear_resize(values: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let coord = |d: usize, src: usize, dst: usize| {
        let s = ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(src - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = coord(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, fx) = coord(x, sw, dw);
            let top = values[y0 * sw + x0] * (1.0 - fx) + values[y0 * sw + x1] * fx;
            let bottom = values[y1 * sw + x0] * (1.0 - fx) + values[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Writes the map as an 8-bit P5 file, `floor(v * 255 + 0.5)` per pixel.
pub fn save_map(map: &SaliencyMap, path: &Path) -> Result<()> {
    fs::write(path, encode_map(map)?).map_err(|e| Error::io(path, e))
}

pub fn encode_map(map: &SaliencyMap) -> Result<Vec<u8>> {
    map.check_unit_range()?;
    let pixels = map
        .values
        .iter()
        .map(|v| (v * 255.0 + 0.5).floor() as u8)
        .collect();
    Ok(pnm::encode_pgm(&GrayImage::new(map.width, map.height, pixels)?))
}

pub fn load_map(path: &Path) -> Result<SaliencyMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes)
}

/// Only P5 is accepted for maps; colour rasters are rejected.
pub fn decode_map(bytes: &[u8]) -> Result<SaliencyMap> {
    match pnm::decode(bytes)? {
        pnm::Raster::Gray(g) => SaliencyMap::new(
            g.width(),
            g.height(),
            g.pixels().iter().map(|&p| p as f64 / 255.0).collect(),
        ),
        pnm::Raster::Rgb(_) => Err(Error::Format {
            offset: 0,
            msg: "saliency maps must be single-channel P5 files".into(),
        }),
    }
}

/// Source of saliency maps for frames.
pub trait SaliencyProvider: Send + Sync {
    fn name(&self) -> String;

    /// Map for the frame named `stem`; dimensions equal the image's.
    fn compute(&self, stem: &str, image: &GrayImage) -> Result<SaliencyMap>;
}

impl SaliencyProvider for SpectralResidual {
    fn name(&self) -> String {
        "spectral".into()
    }

    fn compute(&self, _stem: &str, image: &GrayImage) -> Result<SaliencyMap> {
        spectral_residual(image, self.blur_radius, self.resize_to)
    }
}

/// Reads `<dir>/<stem>.pgm` for each frame.
#[derive(Debug, Clone)]
pub struct FileProvider {
    pub dir: PathBuf,
}

impl SaliencyProvider for FileProvider {
    fn name(&self) -> String {
        format!("file:{}", self.dir.display())
    }

    fn compute(&self, stem: &str, image: &GrayImage) -> Result<SaliencyMap> {
        let path = self.dir.join(format!("{stem}.pgm"));
        if !path.is_file() {
            return Err(Error::Input(format!(
                "no saliency map for frame {stem} (looked for {})",
                path.display()
            )));
        }
        let map = load_map(&path)?;
        if map.width != image.width() || map.height != image.height() {
            return Err(Error::Shape(format!(
                "saliency map for frame {stem} is {}x{}, frame is {}x{}",
                map.width,
                map.height,
                image.width(),
                image.height()
            )));
        }
        Ok(map)
    }
}

/// Resolves `"spectral"` or `"file:<directory>"`.
pub fn provider_from_name(name: &str) -> Result<Box<dyn SaliencyProvider>> {
    if name == "spectral" {
        return Ok(Box::new(SpectralResidual::default()));
    }
    if let Some(dir) = name.strip_prefix("file:") {
        if dir.is_empty() {
            return Err(Error::Config("file provider needs a directory: file:<dir>".into()));
        }
        return Ok(Box::new(FileProvider { dir: dir.into() }));
    }
    Err(Error::Config(format!(
        "unknown saliency provider {name:?} (expected \"spectral\" or \"file:<dir>\")"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let m = SaliencyMap::new(3, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(normalize_map(&m).unwrap().values(), &[0.0, 0.5, 1.0]);
        let c = SaliencyMap::filled(4, 2, 0.7);
        assert!(normalize_map(&c).unwrap().values().iter().all(|&v| v == 0.0));
        let full = SaliencyMap::new(2, 2, vec![0.0, 1.0, 0.25, 0.3]).unwrap();
        let again = normalize_map(&full).unwrap();
        for (a, b) in again.values().iter().zip(full.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let bad = SaliencyMap::new(2, 1, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(normalize_map(&bad), Err(Error::Data(_))));
    }

    #[test]
    fn apply_window_examples() {
        let img = GrayImage::from_fn(4, 3, |x, y| (x * 60 + y) as u8);
        let ones = SaliencyMap::filled(4, 3, 1.0);
        assert_eq!(apply_window(&img, &ones).unwrap(), img);
        let zeros = SaliencyMap::filled(4, 3, 0.0);
        assert!(apply_window(&img, &zeros).unwrap().pixels().iter().all(|&p| p == 0));
        let one = GrayImage::filled(1, 1, 101);
        let half = SaliencyMap::filled(1, 1, 0.5);
        assert_eq!(apply_window(&one, &half).unwrap().pixels(), &[51]);
        assert!(matches!(
            apply_window(&img, &SaliencyMap::filled(3, 3, 1.0)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            apply_window(&one, &SaliencyMap::filled(1, 1, 1.5)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn mean_examples() {
        let u = SaliencyMap::filled(10, 8, 0.4);
        assert!((mean_saliency(&u, 2, 3, 5, 4).unwrap() - 0.4).abs() < 1e-15);
        assert!((IntegralMap::new(&u).mean(0, 0, 10, 8).unwrap() - 0.4).abs() < 1e-12);
        let m = SaliencyMap::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(mean_saliency(&m, 0, 0, 2, 2).unwrap(), 0.5);
        assert_eq!(IntegralMap::new(&m).mean(0, 0, 2, 2).unwrap(), 0.5);
        assert!(matches!(mean_saliency(&m, 1, 0, 2, 1), Err(Error::Bounds { .. })));
        assert!(matches!(IntegralMap::new(&m).mean(0, 0, 0, 1), Err(Error::Bounds { .. })));
    }

    #[test]
    fn map_bytes_follow_rounding_rule() {
        let m = SaliencyMap::new(2, 2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let bytes = encode_map(&m).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 128, 64]);
        let back = decode_map(&bytes).unwrap();
        for (a, b) in back.values().iter().zip(m.values()) {
            assert!((a - b).abs() <= 1.0 / 510.0);
        }
    }

    #[test]
    fn map_decode_rejections() {
        assert!(matches!(decode_map(b"P5\n1 1\n100\n\x00"), Err(Error::Format { .. })));
        assert!(matches!(decode_map(b"P6\n1 1\n255\n\x00\x00\x00"), Err(Error::Format { .. })));
    }

    #[test]
    fn spectral_residual_constant_and_config() {
        let flat = GrayImage::filled(37, 23, 90);
        let m = spectral_residual(&flat, 3, 64).unwrap();
        assert_eq!((m.width(), m.height()), (37, 23));
        assert!(m.values().iter().all(|&v| v == 0.0));
        let black = GrayImage::filled(8, 8, 0);
        assert!(spectral_residual(&black, 3, 16).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(matches!(spectral_residual(&flat, 3, 48), Err(Error::Config(_))));
        assert!(matches!(spectral_residual(&flat, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn area_weights_sum_to_one() {
        for (src, dst) in [(320, 64), (240, 64), (10, 64), (64, 64), (7, 3)] {
            for taps in area_weights(src, dst) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12, "{src}->{dst}");
            }
        }
    }

    #[test]
    fn provider_names() {
        assert_eq!(provider_from_name("spectral").unwrap().name(), "spectral");
        assert_eq!(provider_from_name("file:/tmp/maps").unwrap().name(), "file:/tmp/maps");
        assert!(matches!(provider_from_name("mlnet"), Err(Error::Config(_))));
        assert!(matches!(provider_from_name("file:"), Err(Error::Config(_))));
    }
}
