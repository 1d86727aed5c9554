//! Pedestrian detection and post-recording tracking for surveillance footage.
//!
//! Frames are scanned with a single-scale sliding window; each window is
//! described by a HOG vector and scored by a linear SVM. A saliency map can
//! act as region proposal: the frame is multiplied by the map and windows with
//! little saliency are never classified. After a recording, detections are
//! clustered with restarted k-means to recover each person's path.

pub mod detector;
pub mod error;
pub mod eval;
pub mod fft;
pub mod hog;
pub mod image;
pub mod io;
pub mod pnm;
pub mod saliency;
pub mod svm;
pub mod tracker;

pub use detector::{detect_full, detect_salient, nms, sliding_windows, DetectParams, DetectStats, Detection};
pub use error::{Error, Result};
pub use eval::{iou, match_and_score, EvalReport, GroundTruthBox, Rect};
pub use hog::{hog_dense, hog_window, HogConfig, HogDescriptor};
pub use image::{GrayImage, RgbImage};
pub use saliency::{SaliencyMap, SaliencyProvider};
pub use svm::{Label, LabeledSample, LinearSvmModel, TrainParams};
pub use tracker::{DetectionRecord, Track, TrackParams};
