use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use hogtrack::detector::detect_full_with_stats;
use hogtrack::eval::{bench_compare, BenchFrame};
use hogtrack::io::{
    load_annotations, read_detections, render_overlay, sample_crops, write_detections, FrameSequence,
};
use hogtrack::saliency::{provider_from_name, save_map};
use hogtrack::svm::{train, training_accuracy};
use hogtrack::tracker::{track, tracks_from_json, tracks_to_json, KMeansParams};
use hogtrack::{
    detect_salient, hog_window, match_and_score, DetectParams, Detection, DetectionRecord, Error, HogConfig, Label,
    LabeledSample, LinearSvmModel, TrackParams, TrainParams,
};
use rayon::prelude::*;

use crate::args::{
    BenchArgs, DetectArgs, DetectFlags, EvalArgs, HogArgs, Mode, RenderArgs, SaliencyArgs, TrackArgs, TrainArgs,
};

/// A failed run: bad flags or inputs exit with 2, everything else with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn parse_size(text: &str, flag: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("{flag} expects WxH (e.g. 64x128), got {text:?}"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Applies HOG flags on top of `stored` (or the defaults). Flags that disagree
/// with a model's stored layout are rejected.
fn resolve_hog(args: &HogArgs, stored: Option<HogConfig>) -> Result<HogConfig, Failure> {
    let mut cfg = stored.unwrap_or_default();
    if let Some(text) = &args.hog_window {
        let (w, h) = parse_size(text, "--hog-window")?;
        cfg.window_w = w;
        cfg.window_h = h;
    }
    if let Some(cell) = args.hog_cell {
        cfg.cell = cell;
        cfg.block_stride = cell;
    }
    if let Some(bins) = args.hog_bins {
        cfg.bins = bins;
    }
    if let Some(model_cfg) = stored {
        if model_cfg != cfg {
            return Err(Failure::Usage(format!(
                "HOG flags conflict with the model, which was trained with window {}x{}, cell {}, {} bins",
                model_cfg.window_w, model_cfg.window_h, model_cfg.cell, model_cfg.bins
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn detect_params(flags: &DetectFlags, hog: &HogConfig) -> Result<DetectParams, Failure> {
    let params = DetectParams {
        stride: flags.stride,
        tau: flags.tau,
        nms_iou: flags.nms_iou,
    };
    params.validate(hog)?;
    Ok(params)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(format!("cannot start {jobs} worker threads: {e}")))
}

fn check_iou(iou: f64) -> Result<(), Failure> {
    if iou > 0.0 && iou <= 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--iou must lie in (0, 1], got {iou}")))
    }
}

fn load_model(path: &Path) -> Result<LinearSvmModel, Failure> {
    require(path, "model file")?;
    LinearSvmModel::load(path).map_err(|e| Failure::Runtime(format!("model {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Joins per-frame failures into one runtime error, or passes.
fn per_frame_failures(failures: Vec<String>) -> CmdResult {
    if failures.is_empty() {
        return Ok(());
    }
    for f in &failures {
        eprintln!("error: {f}");
    }
    Err(Failure::Runtime(format!("{} frame(s) failed", failures.len())))
}

pub fn train_cmd(args: &TrainArgs) -> CmdResult {
    require(&args.frames, "frames directory")?;
    require(&args.annotations, "annotations file")?;
    let hog = resolve_hog(&args.hog, None)?;
    let params = TrainParams {
        lambda: args.lambda,
        epochs: args.epochs,
        seed: args.seed,
    };
    params.validate()?;

    let seq = FrameSequence::open(&args.frames)?;
    let ann = load_annotations(&args.annotations, seq.width(), seq.height())?;
    let crops = sample_crops(&seq, &ann, (hog.window_w, hog.window_h), args.negatives, args.seed)?;
    let samples = crops
        .crops
        .iter()
        .map(|c| Ok(LabeledSample::new(hog_window(&c.image, 0, 0, &hog)?.values, c.label)))
        .collect::<Result<Vec<_>, Error>>()?;
    let positives = samples.iter().filter(|s| s.label == Label::Positive).count();
    println!(
        "crops: {positives} positive, {} negative, {} negatives skipped",
        samples.len() - positives,
        crops.skipped
    );

    let mut model = train(&samples, &params)?;
    model.hog = Some(hog);
    let accuracy = training_accuracy(&model, &samples)?;
    model.save(&args.out)?;
    println!("training accuracy: {accuracy:.4}");
    println!("model written to {}", args.out.display());
    Ok(())
}

/// Detections, windows classified, windows total and saliency seconds.
type FrameOutcome = (Vec<Detection>, usize, usize, f64);

pub fn detect_cmd(args: &DetectArgs) -> CmdResult {
    require(&args.frames, "frames directory")?;
    let model = load_model(&args.model)?;
    let hog = resolve_hog(&args.hog, model.hog)?;
    let params = detect_params(&args.detect, &hog)?;
    let provider = match args.mode {
        Mode::Salient => Some(provider_from_name(&args.provider)?),
        Mode::Full => None,
    };
    let workers = pool(args.jobs)?;
    let seq = FrameSequence::open(&args.frames)?;

    let start = Instant::now();
    let results: Vec<Result<FrameOutcome, String>> = workers.install(|| {
        (0..seq.len())
            .into_par_iter()
            .map(|i| {
                let run = || -> Result<_, Error> {
                    let image = seq.load(i)?;
                    match &provider {
                        None => {
                            let (d, s) = detect_full_with_stats(&image, &model, &hog, &params, i)?;
                            Ok((d, s.windows_classified, s.windows_total, 0.0))
                        }
                        Some(p) => {
                            let t = Instant::now();
                            let map = p.compute(&seq.stem(i), &image)?;
                            let sal_time = t.elapsed().as_secs_f64();
                            let (d, s) = detect_salient(&image, &map, &model, &hog, &params, i)?;
                            Ok((d, s.windows_classified, s.windows_total, sal_time))
                        }
                    }
                };
                run().map_err(|e| format!("frame {}: {e}", seq.stem(i)))
            })
            .collect()
    });
    let elapsed = start.elapsed().as_secs_f64();

    let mut failures = Vec::new();
    let mut per_frame = Vec::new();
    for r in results {
        match r {
            Ok(v) => per_frame.push(v),
            Err(e) => failures.push(e),
        }
    }
    per_frame_failures(failures)?;

    let (mut classified, mut total, mut saliency_time) = (0, 0, 0.0);
    let mut all = Vec::new();
    let mut record = DetectionRecord::new(hog.descriptor_len(), seq.width(), seq.height());
    for (i, (dets, c, t, s)) in per_frame.into_iter().enumerate() {
        classified += c;
        total += t;
        saliency_time += s;
        all.extend(dets.iter().cloned());
        if args.record.is_some() {
            record.push_frame(i, dets)?;
        }
    }
    write_detections(&all, &args.out)?;
    if let Some(path) = &args.record {
        record.save(path)?;
        println!("record written to {}", path.display());
    }

    let mode = match args.mode {
        Mode::Full => "full",
        Mode::Salient => "salient",
    };
    println!("mode: {mode}");
    println!("frames: {}", seq.len());
    println!("detections: {}", all.len());
    println!("windows classified: {classified} of {total}");
    if provider.is_some() {
        println!("saliency time: {saliency_time:.6} s (summed over frames)");
    }
    println!("wall time: {elapsed:.6} s");
    Ok(())
}

pub fn track_cmd(args: &TrackArgs) -> CmdResult {
    require(&args.record, "record file")?;
    let record = DetectionRecord::load(&args.record)?;
    let params = TrackParams {
        location_weight: args.location_weight,
        kmeans: KMeansParams {
            restarts: args.restarts,
            seed: args.seed,
            ..KMeansParams::default()
        },
    };
    if args.restarts == 0 {
        return Err(Failure::Usage("--restarts must be at least 1".into()));
    }
    if !(args.location_weight.is_finite() && args.location_weight >= 0.0) {
        return Err(Failure::Usage(format!(
            "--location-weight must be finite and non-negative, got {}",
            args.location_weight
        )));
    }
    if record.total_detections() == 0 {
        fs::write(&args.out, tracks_to_json(&[])).map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;
        println!("notice: the record holds no detections; wrote an empty tracks file");
        return Ok(());
    }

    let workers = pool(args.jobs)?;
    let outcome = workers.install(|| track(&record, &params))?;
    fs::write(&args.out, tracks_to_json(&outcome.tracks))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", args.out.display())))?;
    println!("k: {}", outcome.k);
    if let Some(c) = &outcome.clustering {
        println!("final inertia: {}", c.inertia);
        println!("best restart: {} of {}", c.restart, args.restarts);
    }
    println!("tracks: {}", outcome.tracks.len());
    println!("same-frame collisions: {}", outcome.collisions());
    Ok(())
}

pub fn eval_cmd(args: &EvalArgs) -> CmdResult {
    require(&args.detections, "detections file")?;
    require(&args.annotations, "annotations file")?;
    check_iou(args.iou)?;
    let (w, h) = match (&args.frames, &args.frame_size) {
        (Some(dir), _) => {
            require(dir, "frames directory")?;
            let seq = FrameSequence::open(dir)?;
            (seq.width(), seq.height())
        }
        (None, Some(text)) => parse_size(text, "--frame-size")?,
        (None, None) => return Err(Failure::Usage("pass --frames or --frame-size".into())),
    };
    let truth = load_annotations(&args.annotations, w, h)?;
    let dets = read_detections(&args.detections)?;
    let report = match_and_score(&dets, &truth.boxes, args.iou);
    println!("tp: {}", report.tp);
    println!("fp: {}", report.fp);
    println!("fn: {}", report.fn_);
    println!("precision: {:.4}", report.precision);
    println!("recall: {:.4}", report.recall);
    Ok(())
}

pub fn bench_cmd(args: &BenchArgs) -> CmdResult {
    require(&args.frames, "frames directory")?;
    require(&args.annotations, "annotations file")?;
    let model = load_model(&args.model)?;
    let hog = resolve_hog(&args.hog, model.hog)?;
    let params = detect_params(&args.detect, &hog)?;
    check_iou(args.iou)?;
    let provider = provider_from_name(&args.provider)?;
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let seq = FrameSequence::open(&args.frames)?;
    let truth = load_annotations(&args.annotations, seq.width(), seq.height())?;
    let frames = (0..seq.len())
        .map(|i| {
            Ok(BenchFrame {
                index: i,
                stem: seq.stem(i),
                image: seq.load(i)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let report = bench_compare(&frames, provider.as_ref(), &truth.boxes, &model, &hog, &params, args.iou, args.jobs)?;
    print!("{}", report.render());
    Ok(())
}

pub fn saliency_cmd(args: &SaliencyArgs) -> CmdResult {
    require(&args.frames, "frames directory")?;
    let provider = provider_from_name(&args.provider)?;
    let workers = pool(args.jobs)?;
    let seq = FrameSequence::open(&args.frames)?;
    create_dir(&args.out)?;
    let failures: Vec<String> = workers.install(|| {
        (0..seq.len())
            .into_par_iter()
            .filter_map(|i| {
                let stem = seq.stem(i);
                let run = || -> Result<(), Error> {
                    let map = provider.compute(&stem, &seq.load(i)?)?;
                    save_map(&map, &args.out.join(format!("{stem}.pgm")))
                };
                run().err().map(|e| format!("frame {stem}: {e}"))
            })
            .collect()
    });
    per_frame_failures(failures)?;
    println!("{} saliency maps written to {}", seq.len(), args.out.display());
    Ok(())
}

pub fn render_cmd(args: &RenderArgs) -> CmdResult {
    require(&args.frames, "frames directory")?;
    let dets = match &args.detections {
        Some(p) => {
            require(p, "detections file")?;
            read_detections(p)?
        }
        None => Vec::new(),
    };
    let tracks = match &args.tracks {
        Some(p) => {
            require(p, "tracks file")?;
            let text = fs::read_to_string(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            tracks_from_json(&text)?
        }
        None => Vec::new(),
    };
    let seq = FrameSequence::open(&args.frames)?;
    create_dir(&args.out)?;
    for i in 0..seq.len() {
        let image = seq.load(i)?;
        let frame_dets: Vec<Detection> = dets.iter().filter(|d| d.frame == i).cloned().collect();
        // each track is drawn up to the current frame
        let trails: Vec<_> = tracks
            .iter()
            .map(|t| hogtrack::Track {
                id: t.id,
                points: t.points.iter().filter(|p| p.frame <= i).copied().collect(),
            })
            .collect();
        render_overlay(&image, &frame_dets, &trails, &args.out.join(format!("{}.ppm", seq.stem(i))))?;
    }
    println!("{} overlays written to {}", seq.len(), args.out.display());
    Ok(())
}
