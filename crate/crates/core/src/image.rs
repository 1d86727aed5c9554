//! Raster types shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels supplied for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single value.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("positive dimensions")
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("positive dimensions")
    }

    /// Converts interleaved RGB bytes to gray with luma weights 0.299/0.587/0.114,
    /// rounding half up.
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} RGB bytes supplied for a {width}x{height} image",
                rgb.len()
            )));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        Self::new(width, height, pixels)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    /// Copies the `w`x`h` region at (`x`, `y`).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        check_rect(x, y, w, h, self.width, self.height)?;
        let mut pixels = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            pixels.extend_from_slice(&self.pixels[start..start + w]);
        }
        GrayImage::new(w, h, pixels)
    }

    /// Nearest-neighbour resample to `w`x`h`.
    pub fn resize_nearest(&self, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 {
            return Err(Error::Shape(format!("cannot resize to {w}x{h}")));
        }
        let (sw, sh) = (self.width, self.height);
        Ok(GrayImage::from_fn(w, h, |x, y| {
            // Sample at the target pixel centre.
            let sx = ((2 * x + 1) * sw / (2 * w)).min(sw - 1);
            let sy = ((2 * y + 1) * sh / (2 * h)).min(sh - 1);
            self.get(sx, sy)
        }))
    }

    pub fn to_rgb(&self) -> RgbImage {
        let data = self.pixels.iter().flat_map(|&p| [p, p, p]).collect();
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Gray value of an RGB triple: round-half-up of 0.299 r + 0.587 g + 0.114 b.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    // Integer form of the weights keeps the rounding exact.
    let v = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((v + 500) / 1000) as u8
}

/// Interleaved 8-bit RGB image, used for overlays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{} bytes supplied for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&color);
    }

    /// Sets the pixel if (`x`, `y`) lies inside the image.
    pub fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, color);
        }
    }
}

pub(crate) fn check_rect(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    width: usize,
    height: usize,
) -> Result<()> {
    let fits = w > 0
        && h > 0
        && x.checked_add(w).is_some_and(|r| r <= width)
        && y.checked_add(h).is_some_and(|b| b <= height);
    if fits {
        Ok(())
    } else {
        Err(Error::Bounds {
            x,
            y,
            w,
            h,
            width,
            height,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_rounds_half_up() {
        assert_eq!(luma(255, 0, 0), 76);
        assert_eq!(luma(0, 255, 0), 150);
        assert_eq!(luma(0, 0, 255), 29);
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(GrayImage::new(0, 2, vec![]).is_err());
        assert!(GrayImage::from_rgb(1, 1, &[1, 2]).is_err());
    }

    #[test]
    fn crop_and_resize() {
        let img = GrayImage::from_fn(4, 4, |x, y| (y * 4 + x) as u8);
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.pixels(), &[9, 10, 13, 14]);
        assert!(img.crop(3, 3, 2, 1).is_err());

        let up = c.resize_nearest(4, 4).unwrap();
        assert_eq!(up.pixels(), &[9, 9, 10, 10, 9, 9, 10, 10, 13, 13, 14, 14, 13, 13, 14, 14]);
        let down = img.resize_nearest(2, 2).unwrap();
        assert_eq!(down.pixels(), &[5, 7, 13, 15]);
    }
}
