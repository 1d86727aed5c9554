//! Binary netpbm codec: P5 (gray) and P6 (RGB), 8-bit only.

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};

const SUPPORTED: &str = "supported formats are binary PGM (P5) and binary PPM (P6)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Raster {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Raster {
    /// Gray view; RGB is converted with [`crate::image::luma`].
    pub fn into_gray(self) -> GrayImage {
        match self {
            Raster::Gray(g) => g,
            Raster::Rgb(c) => GrayImage::from_rgb(c.width(), c.height(), c.data())
                .expect("RGB raster has consistent size"),
        }
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    /// Offset of the first payload byte.
    data_start: usize,
}

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    /// Next decimal field and the offset it starts at.
    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (start, v))
            .ok_or_else(|| format_err(start, format!("{what} is out of range")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(_) => return Err(format_err(0, format!("unsupported image magic; {SUPPORTED}"))),
        None => return Err(format_err(0, format!("file too short for a header; {SUPPORTED}"))),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let (_, width) = cur.number("width")?;
    let (_, height) = cur.number("height")?;
    let (maxval_at, maxval) = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err(maxval_at, format!("zero image dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(format_err(maxval_at, format!("maxval {maxval} is not supported (need 255)")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(format_err(cur.pos, "expected a single whitespace byte after maxval")),
    }
    Ok(Header {
        channels,
        width,
        height,
        data_start: cur.pos + 1,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Raster> {
    let h = parse_header(bytes)?;
    let len = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(h.channels))
        .ok_or_else(|| format_err(h.data_start, "image dimensions overflow"))?;
    let payload = &bytes[h.data_start..];
    if payload.len() < len {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: {} of {len} bytes present", payload.len()),
        ));
    }
    let data = payload[..len].to_vec();
    Ok(match h.channels {
        1 => Raster::Gray(GrayImage::new(h.width, h.height, data)?),
        _ => Raster::Rgb(RgbImage::new(h.width, h.height, data)?),
    })
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    decode(bytes).map(Raster::into_gray)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_p5_identity() {
        let bytes = b"P5\n2 2\n255\n\x00\x40\x80\xff";
        let img = decode_gray(bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 64, 128, 255]);
    }

    #[test]
    fn decodes_p6_to_luma() {
        let bytes = b"P6 1 1 255\n\xff\x00\x00";
        let raster = decode(bytes).unwrap();
        assert!(matches!(raster, Raster::Rgb(_)));
        assert_eq!(raster.into_gray().pixels(), &[76]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n3 # width\n1\n255\n\x01\x02\x03";
        assert_eq!(decode_gray(bytes).unwrap().pixels(), &[1, 2, 3]);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let bytes = b"P5\n2 2\n255\n\x00\x40\x80";
        match decode(bytes) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, bytes.len());
                assert!(msg.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_other_maxval_and_magic() {
        match decode(b"P5\n1 1\n65535\n\x00\x00") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
        match decode(b"\x89PNG\r\n") {
            Err(Error::Format { offset: 0, msg }) => assert!(msg.contains("P5")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n0 1\n255\n").is_err());
        assert!(decode(b"P5\n1").is_err());
    }

    #[test]
    fn encode_round_trips() {
        let g = GrayImage::from_fn(5, 3, |x, y| (x * 50 + y) as u8);
        assert_eq!(decode_gray(&encode_pgm(&g)).unwrap(), g);
        let c = g.to_rgb();
        assert_eq!(decode(&encode_ppm(&c)).unwrap(), Raster::Rgb(c));
    }
}
