use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hogtrack", version, about = "HOG + linear SVM pedestrian detection and post-recording tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a linear SVM on crops cut from annotated frames.
    Train(TrainArgs),
    /// Run the detector over a directory of frames.
    Detect(DetectArgs),
    /// Cluster a detection record into per-person tracks.
    Track(TrackArgs),
    /// Score a detections file against ground truth.
    Eval(EvalArgs),
    /// Compare the full and saliency-windowed paths side by side.
    Bench(BenchArgs),
    /// Write one saliency map per frame.
    Saliency(SaliencyArgs),
    /// Draw detections and tracks over the frames.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Salient,
}

/// HOG layout flags. Unset flags fall back to the model's stored layout, then
/// to the defaults (64x128 window, 8-px cells, 9 bins).
#[derive(Debug, Clone, Args)]
pub struct HogArgs {
    /// Detection window size, e.g. 64x128.
    #[arg(long, value_name = "WxH")]
    pub hog_window: Option<String>,
    /// Cell side in pixels; blocks step by one cell.
    #[arg(long, value_name = "N")]
    pub hog_cell: Option<usize>,
    /// Orientation bins over 0-180 degrees.
    #[arg(long, value_name = "N")]
    pub hog_bins: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectFlags {
    /// Sliding-window step in pixels (multiple of the cell size).
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
    /// Windows whose mean saliency is below this are skipped.
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    /// Enable greedy non-maximum suppression at this IoU.
    #[arg(long, value_name = "F")]
    pub nms_iou: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hog: HogArgs,
    /// Random negative crops per frame.
    #[arg(long, default_value_t = 10)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    pub mode: Mode,
    /// "spectral" or "file:<dir>"; used in salient mode.
    #[arg(long, default_value = "spectral")]
    pub provider: String,
    #[command(flatten)]
    pub detect: DetectFlags,
    #[command(flatten)]
    pub hog: HogArgs,
    /// Detections CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write a tracker record (detections with HOG vectors).
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub record: PathBuf,
    /// Tracks JSON to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Weight of the normalised window centre next to the HOG vector.
    #[arg(long, default_value_t = 1.0)]
    pub location_weight: f64,
    #[arg(long, default_value_t = 100)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Frames the annotations refer to; fixes the frame size for box checks.
    #[arg(long, required_unless_present = "frame_size", conflicts_with = "frame_size")]
    pub frames: Option<PathBuf>,
    /// Frame size as WxH, instead of --frames.
    #[arg(long, value_name = "WxH")]
    pub frame_size: Option<String>,
    /// Minimum IoU for a detection to count as a true positive.
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "spectral")]
    pub provider: String,
    #[command(flatten)]
    pub detect: DetectFlags,
    #[command(flatten)]
    pub hog: HogArgs,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, default_value = "spectral")]
    pub provider: String,
    /// Directory for `<frame stem>.pgm` maps; created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub tracks: Option<PathBuf>,
    /// Directory for `<frame stem>.ppm` overlays; created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
}
