//! Files in and out of the pipeline: frames, annotations, training crops,
//! detection lists and overlays.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::eval::{iou, GroundTruthBox, Rect};
use crate::image::{GrayImage, RgbImage};
use crate::pnm;
use crate::svm::Label;
use crate::tracker::Track;

/// Decodes a P5 or P6 file to gray.
pub fn decode_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    pnm::decode_gray(&bytes).map_err(|e| match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn write_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, pnm::encode_pgm(image)).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(image: &RgbImage, path: &Path) -> Result<()> {
    fs::write(path, pnm::encode_ppm(image)).map_err(|e| Error::io(path, e))
}

/// Frames of a directory, ordered by the raw bytes of their file names.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    dir: PathBuf,
    files: Vec<PathBuf>,
    width: usize,
    height: usize,
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
}

impl FrameSequence {
    /// Lists `*.pgm` / `*.ppm` files; the first frame fixes the sequence size.
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if is_frame_file(&path) {
                files.push(path);
            }
        }
        files.sort_by(|a, b| {
            let key = |p: &PathBuf| p.file_name().map(|n| n.as_encoded_bytes().to_vec());
            key(a).cmp(&key(b))
        });
        let first = files.first().ok_or_else(|| {
            Error::Input(format!("no .pgm or .ppm frames in {}", dir.display()))
        })?;
        let probe = decode_image(first)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            width: probe.width(),
            height: probe.height(),
            files,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn path(&self, index: usize) -> &Path {
        &self.files[index]
    }

    /// File name without extension.
    pub fn stem(&self, index: usize) -> String {
        self.files[index]
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn load(&self, index: usize) -> Result<GrayImage> {
        let path = &self.files[index];
        let img = decode_image(path)?;
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::Shape(format!(
                "{} is {}x{}, sequence frames are {}x{}",
                path.display(),
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        Ok(img)
    }
}

/// Ground-truth boxes keyed by frame index (position in the sequence).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub boxes: Vec<GroundTruthBox>,
}

impl AnnotationSet {
    pub fn for_frame(&self, frame: usize) -> impl Iterator<Item = &GroundTruthBox> {
        self.boxes.iter().filter(move |b| b.frame == frame)
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

pub fn load_annotations(path: &Path, frame_w: usize, frame_h: usize) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, frame_w, frame_h)
}

/// Parses `frame,x,y,w,h` lines. A non-numeric first line is a header;
/// blank lines and `#` comments are ignored.
pub fn parse_annotations(text: &str, frame_w: usize, frame_h: usize) -> Result<AnnotationSet> {
    let mut boxes = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
        let first = !seen_content;
        seen_content = true;
        let values = match parsed {
            Some(v) if v.len() == 5 => v,
            None if first && fields.iter().any(|f| f.chars().any(|c| c.is_alphabetic())) => continue,
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected frame,x,y,w,h with non-negative integers, got {l:?}"),
                })
            }
        };
        let rect = Rect::new(values[1], values[2], values[3], values[4]);
        if rect.w == 0 || rect.h == 0 {
            return Err(Error::Parse {
                line,
                msg: "box has zero width or height".into(),
            });
        }
        if rect.x + rect.w > frame_w || rect.y + rect.h > frame_h {
            return Err(Error::Parse {
                line,
                msg: format!("box {rect:?} extends past the {frame_w}x{frame_h} frame"),
            });
        }
        boxes.push(GroundTruthBox {
            frame: values[0],
            rect,
        });
    }
    Ok(AnnotationSet { boxes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub frame: usize,
    pub image: GrayImage,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CropSet {
    pub crops: Vec<Crop>,
    /// Negatives that could not be placed (frame too small or no free spot found).
    pub skipped: usize,
}

/// Largest overlap a negative window may have with any truth box.
pub const NEGATIVE_MAX_IOU: f64 = 0.2;
pub const NEGATIVE_ATTEMPTS: usize = 100;

pub fn sample_crops(
    sequence: &FrameSequence,
    annotations: &AnnotationSet,
    window: (usize, usize),
    negatives_per_frame: usize,
    seed: u64,
) -> Result<CropSet> {
    sample_crops_with(sequence.len(), |i| sequence.load(i), annotations, window, negatives_per_frame, seed)
}

/// Training crops from frames `0..frames` supplied by `load`.
///
/// Each truth box becomes a positive, resized (nearest neighbour) to `window`.
/// Each frame then yields up to `negatives_per_frame` uniformly placed
/// window-sized negatives whose IoU with every truth box of the frame is below
/// [`NEGATIVE_MAX_IOU`], with at most [`NEGATIVE_ATTEMPTS`] tries each.
pub fn sample_crops_with(
    frames: usize,
    mut load: impl FnMut(usize) -> Result<GrayImage>,
    annotations: &AnnotationSet,
    window: (usize, usize),
    negatives_per_frame: usize,
    seed: u64,
) -> Result<CropSet> {
    let (ww, wh) = window;
    if ww == 0 || wh == 0 {
        return Err(Error::Config(format!("crop window {ww}x{wh} is empty")));
    }
    if let Some(b) = annotations.boxes.iter().find(|b| b.frame >= frames) {
        return Err(Error::Input(format!(
            "annotation refers to frame {} but the sequence has {frames} frames",
            b.frame
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = CropSet::default();
    for frame in 0..frames {
        let truth: Vec<Rect> = annotations.for_frame(frame).map(|b| b.rect).collect();
        if truth.is_empty() && negatives_per_frame == 0 {
            continue;
        }
        let image = load(frame)?;
        for r in &truth {
            let crop = image.crop(r.x, r.y, r.w, r.h)?.resize_nearest(ww, wh)?;
            out.crops.push(Crop {
                frame,
                image: crop,
                label: Label::Positive,
            });
        }
        if ww > image.width() || wh > image.height() {
            out.skipped += negatives_per_frame;
            continue;
        }
        for _ in 0..negatives_per_frame {
            let placed = (0..NEGATIVE_ATTEMPTS).find_map(|_| {
                let x = rng.random_range(0..=image.width() - ww);
                let y = rng.random_range(0..=image.height() - wh);
                let cand = Rect::new(x, y, ww, wh);
                truth
                    .iter()
                    .all(|t| iou(&cand, t) < NEGATIVE_MAX_IOU)
                    .then_some(cand)
            });
            match placed {
                Some(r) => out.crops.push(Crop {
                    frame,
                    image: image.crop(r.x, r.y, r.w, r.h)?,
                    label: Label::Negative,
                }),
                None => out.skipped += 1,
            }
        }
    }
    Ok(out)
}

pub const DETECTION_COLOR: [u8; 3] = [0, 255, 0];

/// Track colours, indexed by `track id % 12`.
pub const TRACK_PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

pub fn track_color(id: usize) -> [u8; 3] {
    TRACK_PALETTE[id % TRACK_PALETTE.len()]
}

/// Integer line from `a` to `b` inclusive (Bresenham).
pub fn line_pixels(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Gray frame as RGB with 1-px detection boxes and track polylines drawn on it.
pub fn overlay(image: &GrayImage, detections: &[Detection], tracks: &[Track]) -> RgbImage {
    let mut out = image.to_rgb();
    for d in detections {
        if d.w == 0 || d.h == 0 {
            continue;
        }
        let (x0, y0) = (d.x as i64, d.y as i64);
        let (x1, y1) = (x0 + d.w as i64 - 1, y0 + d.h as i64 - 1);
        for x in x0..=x1 {
            out.put(x, y0, DETECTION_COLOR);
            out.put(x, y1, DETECTION_COLOR);
        }
        for y in y0..=y1 {
            out.put(x0, y, DETECTION_COLOR);
            out.put(x1, y, DETECTION_COLOR);
        }
    }
    for t in tracks {
        let color = track_color(t.id);
        let pts: Vec<(i64, i64)> = t
            .points
            .iter()
            .map(|p| (round_half_up(p.cx), round_half_up(p.cy)))
            .collect();
        if let [only] = pts.as_slice() {
            out.put(only.0, only.1, color);
        }
        for seg in pts.windows(2) {
            for (x, y) in line_pixels(seg[0], seg[1]) {
                out.put(x, y, color);
            }
        }
    }
    out
}

pub fn render_overlay(image: &GrayImage, detections: &[Detection], tracks: &[Track], path: &Path) -> Result<()> {
    write_ppm(&overlay(image, detections, tracks), path)
}

pub const DETECTIONS_HEADER: &str = "frame,x,y,w,h,score";

/// One `frame,x,y,w,h,score` line per detection, after a header line.
pub fn detections_to_csv(detections: &[Detection]) -> String {
    let mut s = String::from(DETECTIONS_HEADER);
    s.push('\n');
    for d in detections {
        writeln!(s, "{},{},{},{},{},{:?}", d.frame, d.x, d.y, d.w, d.h, d.score).unwrap();
    }
    s
}

pub fn detections_from_csv(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || (i == 0 && l == DETECTIONS_HEADER) {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let int = |j: usize| f[j].parse::<usize>().map_err(|_| err(format!("bad integer {:?}", f[j])));
        let score: f64 = f[5].parse().map_err(|_| err(format!("bad score {:?}", f[5])))?;
        out.push(Detection {
            frame: int(0)?,
            x: int(1)?,
            y: int(2)?,
            w: int(3)?,
            h: int(4)?,
            score,
            features: Vec::new(),
        });
    }
    Ok(out)
}

pub fn write_detections(detections: &[Detection], path: &Path) -> Result<()> {
    fs::write(path, detections_to_csv(detections)).map_err(|e| Error::io(path, e))
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    detections_from_csv(&text)
}
