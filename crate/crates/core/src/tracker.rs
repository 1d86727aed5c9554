//! Post-recording tracking.
//!
//! Every detection of a recording is logged with its HOG vector. Once the
//! recording is over, the largest per-frame detection count becomes `k`, all
//! detections are clustered with restarted Lloyd k-means in a joint
//! appearance-and-position space, and each cluster, ordered by frame, is one
//! person's path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordFrame {
    pub index: usize,
    pub detections: Vec<Detection>,
}

/// Detections of a whole recording, frame by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub hog_dim: usize,
    pub frame_w: usize,
    pub frame_h: usize,
    pub frames: Vec<RecordFrame>,
}

const RECORD_MAGIC: &str = "hogtrack-record";

impl DetectionRecord {
    pub fn new(hog_dim: usize, frame_w: usize, frame_h: usize) -> Self {
        Self {
            hog_dim,
            frame_w,
            frame_h,
            frames: Vec::new(),
        }
    }

    /// Appends a frame; indices must strictly increase and every detection
    /// must carry a `hog_dim`-long feature vector.
    pub fn push_frame(&mut self, index: usize, detections: Vec<Detection>) -> Result<()> {
        if let Some(last) = self.frames.last() {
            if index <= last.index {
                return Err(Error::Input(format!(
                    "frame {index} does not follow frame {}",
                    last.index
                )));
            }
        }
        for d in &detections {
            if d.features.len() != self.hog_dim {
                return Err(Error::Shape(format!(
                    "detection in frame {index} has {} features, record expects {}",
                    d.features.len(),
                    self.hog_dim
                )));
            }
        }
        self.frames.push(RecordFrame { index, detections });
        Ok(())
    }

    pub fn total_detections(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }

    fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.frames.iter().flat_map(|f| f.detections.iter())
    }

    /// Text form: a header line, then a `frame=<index>` line per frame followed
    /// by one `frame,x,y,w,h,score,features...` line per detection.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{RECORD_MAGIC} hog_dim={} frame_w={} frame_h={}\n",
            self.hog_dim, self.frame_w, self.frame_h
        );
        for f in &self.frames {
            writeln!(s, "frame={}", f.index).unwrap();
            for d in &f.detections {
                write!(s, "{},{},{},{},{},{:?}", d.frame, d.x, d.y, d.w, d.h, d.score).unwrap();
                for v in &d.features {
                    write!(s, ",{v:?}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty record file".into(),
        })?;
        let header_err = |msg: &str| Error::Parse {
            line: 1,
            msg: format!("record header: {msg}"),
        };
        let mut parts = header.split_whitespace();
        if parts.next() != Some(RECORD_MAGIC) {
            return Err(header_err("missing record magic"));
        }
        let (mut dim, mut fw, mut fh) = (None, None, None);
        for p in parts {
            let (key, value) = p.split_once('=').ok_or_else(|| header_err(p))?;
            let value: usize = value.parse().map_err(|_| header_err(p))?;
            match key {
                "hog_dim" => dim = Some(value),
                "frame_w" => fw = Some(value),
                "frame_h" => fh = Some(value),
                _ => return Err(header_err(&format!("unknown field {key}"))),
            }
        }
        let (Some(dim), Some(fw), Some(fh)) = (dim, fw, fh) else {
            return Err(header_err("need hog_dim, frame_w and frame_h"));
        };
        let mut record = DetectionRecord::new(dim, fw, fh);

        let mut current: Option<(usize, Vec<Detection>)> = None;
        for (line, text) in lines {
            if text.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line, msg };
            if let Some(idx) = text.strip_prefix("frame=") {
                let idx: usize = idx.parse().map_err(|_| err(format!("bad frame index {idx:?}")))?;
                if let Some((i, dets)) = current.take() {
                    record.push_frame(i, dets).map_err(|e| err(e.to_string()))?;
                }
                current = Some((idx, Vec::new()));
                continue;
            }
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != 6 + dim {
                return Err(err(format!(
                    "expected {} fields, found {}",
                    6 + dim,
                    fields.len()
                )));
            }
            let int = |i: usize| -> Result<usize> {
                fields[i]
                    .parse()
                    .map_err(|_| err(format!("field {} is not an integer: {:?}", i + 1, fields[i])))
            };
            let real = |i: usize| -> Result<f64> {
                fields[i]
                    .parse()
                    .map_err(|_| err(format!("field {} is not a number: {:?}", i + 1, fields[i])))
            };
            let det = Detection {
                frame: int(0)?,
                x: int(1)?,
                y: int(2)?,
                w: int(3)?,
                h: int(4)?,
                score: real(5)?,
                features: (6..fields.len()).map(real).collect::<Result<_>>()?,
            };
            if det.x + det.w > fw || det.y + det.h > fh {
                return Err(err("detection exceeds the frame".into()));
            }
            match current.as_mut() {
                Some((idx, dets)) if *idx == det.frame => dets.push(det),
                _ => return Err(err(format!("detection for frame {} outside its frame block", det.frame))),
            }
        }
        if let Some((i, dets)) = current {
            record.push_frame(i, dets)?;
        }
        Ok(record)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Largest number of detections in any single frame.
pub fn choose_k(record: &DetectionRecord) -> Result<usize> {
    record
        .frames
        .iter()
        .map(|f| f.detections.len())
        .max()
        .ok_or_else(|| Error::Input("record contains no frames".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPoint {
    pub frame: usize,
    pub cx: f64,
    pub cy: f64,
    /// HOG values followed by the weighted, frame-normalised centre.
    pub vector: Vec<f64>,
}

pub fn build_points(record: &DetectionRecord, location_weight: f64) -> Result<Vec<ClusterPoint>> {
    if record.frame_w == 0 || record.frame_h == 0 {
        return Err(Error::Input("record frame size must be positive".into()));
    }
    if !location_weight.is_finite() || location_weight < 0.0 {
        return Err(Error::Config(format!(
            "location weight must be finite and non-negative, got {location_weight}"
        )));
    }
    let (fw, fh) = (record.frame_w as f64, record.frame_h as f64);
    record
        .detections()
        .map(|d| {
            if d.features.len() != record.hog_dim {
                return Err(Error::Shape(format!(
                    "detection in frame {} has {} features, record expects {}",
                    d.frame,
                    d.features.len(),
                    record.hog_dim
                )));
            }
            let (cx, cy) = d.center();
            let mut vector = Vec::with_capacity(record.hog_dim + 2);
            vector.extend_from_slice(&d.features);
            vector.push(location_weight * cx / fw);
            vector.push(location_weight * cy / fh);
            Ok(ClusterPoint {
                frame: d.frame,
                cx,
                cy,
                vector,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            restarts: 100,
            max_iters: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from points to their centroids.
    pub inertia: f64,
    /// Index of the restart that produced this result.
    pub restart: usize,
}

/// One Lloyd run from fixed initial centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step, then the final inertia.
    pub history: Vec<f64>,
    pub converged: bool,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, sq_dist(point, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn mean_of(points: &[Vec<f64>], members: impl Iterator<Item = usize>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for i in members {
        for (s, v) in sum.iter_mut().zip(&points[i]) {
            *s += v;
        }
        count += 1;
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    sum
}

/// Recomputes centroids as cluster means. An empty cluster takes the point
/// farthest from its own centroid among clusters with more than one member
/// (ties: lowest point index).
fn update_centroids(points: &[Vec<f64>], assignments: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let members = |assignments: &[usize], j: usize| {
        assignments
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == j)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };
    let mut centroids: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            if counts[j] == 0 {
                Vec::new()
            } else {
                mean_of(points, members(assignments, j).into_iter(), dim)
            }
        })
        .collect();
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut victim: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[a]);
            if victim.is_none_or(|(_, best)| d > best) {
                victim = Some((i, d));
            }
        }
        let (i, _) = victim.expect("k <= n leaves a cluster with two or more points");
        let donor = assignments[i];
        assignments[i] = j;
        counts[donor] -= 1;
        counts[j] = 1;
        centroids[j] = points[i].clone();
        centroids[donor] = mean_of(points, members(assignments, donor).into_iter(), dim);
    }
    centroids
}

/// Lloyd iterations: assign each point to its nearest centroid (ties: lowest
/// index), recompute means, until assignments stop changing or `max_iters`.
pub fn lloyd(points: &[Vec<f64>], initial: Vec<Vec<f64>>, max_iters: usize) -> LloydRun {
    let k = initial.len();
    let mut centroids = initial;
    let mut assignments: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let mut next = Vec::with_capacity(points.len());
        let mut inertia = 0.0;
        for p in points {
            let (j, d) = nearest(p, &centroids);
            next.push(j);
            inertia += d;
        }
        history.push(inertia);
        if assignments.as_ref() == Some(&next) {
            converged = true;
            break;
        }
        centroids = update_centroids(points, &mut next, k);
        assignments = Some(next);
    }
    let assignments = assignments.expect("at least one iteration");
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    history.push(inertia);
    LloydRun {
        assignments,
        centroids,
        inertia,
        history,
        converged,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of restart `restart` under base seed `seed`.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    splitmix64(seed ^ splitmix64(restart as u64))
}

/// Initial centroids of one restart: `k` distinct points drawn without replacement.
pub fn initial_centroids(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Best of `params.restarts` randomly initialised Lloyd runs, by inertia
/// (ties: earliest restart). Restarts run in parallel; the result does not
/// depend on scheduling.
pub fn kmeans(points: &[Vec<f64>], k: usize, params: &KMeansParams) -> Result<KMeansResult> {
    let n = points.len();
    if n == 0 && k == 0 {
        return Ok(KMeansResult {
            assignments: Vec::new(),
            centroids: Vec::new(),
            inertia: 0.0,
            restart: 0,
        });
    }
    if k == 0 || k > n {
        return Err(Error::Input(format!("k = {k} is invalid for {n} points")));
    }
    if params.restarts == 0 {
        return Err(Error::Config("need at least one k-means restart".into()));
    }
    let dim = points[0].len();
    if let Some(i) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::Shape(format!(
            "point {i} has dimension {}, expected {dim}",
            points[i].len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("clustering input contains NaN or infinity".into()));
    }

    let runs: Vec<LloydRun> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            let init = initial_centroids(points, k, restart_seed(params.seed, r));
            lloyd(points, init, params.max_iters)
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1.inertia < best.1.inertia { cur } else { best })
        .expect("at least one restart");
    Ok(KMeansResult {
        assignments: best.assignments,
        centroids: best.centroids,
        inertia: best.inertia,
        restart,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: usize,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    pub points: Vec<TrackPoint>,
}

impl Track {
    /// Points that share their frame with an earlier point of the same track.
    pub fn same_frame_collisions(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[0].frame == w[1].frame)
            .count()
    }
}

/// Groups detections by cluster, each ordered by frame (ties: `cx`, then `cy`).
/// Empty clusters produce no track.
pub fn build_tracks(record: &DetectionRecord, result: &KMeansResult) -> Result<Vec<Track>> {
    let total = record.total_detections();
    if result.assignments.len() != total {
        return Err(Error::Shape(format!(
            "{} cluster assignments for {total} detections",
            result.assignments.len()
        )));
    }
    let k = result.assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<TrackPoint>> = vec![Vec::new(); k.max(result.centroids.len())];
    for (d, &a) in record.detections().zip(&result.assignments) {
        let (cx, cy) = d.center();
        groups[a].push(TrackPoint {
            frame: d.frame,
            cx,
            cy,
        });
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .filter(|(_, pts)| !pts.is_empty())
        .map(|(id, mut points)| {
            points.sort_by(|a, b| {
                a.frame
                    .cmp(&b.frame)
                    .then(a.cx.total_cmp(&b.cx))
                    .then(a.cy.total_cmp(&b.cy))
            });
            Track { id, points }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    pub location_weight: f64,
    pub kmeans: KMeansParams,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            location_weight: 1.0,
            kmeans: KMeansParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub k: usize,
    pub tracks: Vec<Track>,
    /// Absent when there was nothing to cluster.
    pub clustering: Option<KMeansResult>,
}

impl TrackOutcome {
    pub fn collisions(&self) -> usize {
        self.tracks.iter().map(Track::same_frame_collisions).sum()
    }
}

/// `choose_k`, `build_points`, `kmeans`, `build_tracks` in sequence.
pub fn track(record: &DetectionRecord, params: &TrackParams) -> Result<TrackOutcome> {
    let k = choose_k(record)?;
    let points = build_points(record, params.location_weight)?;
    if k == 0 {
        return Ok(TrackOutcome {
            k,
            tracks: Vec::new(),
            clustering: None,
        });
    }
    let vectors: Vec<Vec<f64>> = points.into_iter().map(|p| p.vector).collect();
    let result = kmeans(&vectors, k, &params.kmeans)?;
    let tracks = build_tracks(record, &result)?;
    Ok(TrackOutcome {
        k,
        tracks,
        clustering: Some(result),
    })
}

#[derive(Serialize, Deserialize)]
struct TracksFile {
    tracks: Vec<Track>,
}

pub fn tracks_to_json(tracks: &[Track]) -> String {
    let mut s = serde_json::to_string_pretty(&TracksFile {
        tracks: tracks.to_vec(),
    })
    .expect("tracks serialise");
    s.push('\n');
    s
}

pub fn tracks_from_json(text: &str) -> Result<Vec<Track>> {
    serde_json::from_str::<TracksFile>(text)
        .map(|f| f.tracks)
        .map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("tracks file: {e}"),
        })
}
