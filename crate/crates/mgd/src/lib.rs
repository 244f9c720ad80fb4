//! Motion-guided detection of small moving targets filmed from a moving
//! camera.
//!
//! The library is organized as a staged pipeline:
//!
//! 1. [`align`] — grid keypoints, pyramidal Lucas-Kanade tracking and RANSAC
//!    homography estimation compensate the camera's ego motion.
//! 2. [`mfe`] — aligned three-frame differencing with OR fusion turns
//!    residual motion into candidate bounding boxes.
//! 3. [`track`] — a SORT-style tracker (constant-velocity Kalman filter plus
//!    IoU-gated Hungarian association) links candidates into trajectories.
//! 4. [`trajfilter`] — the aligned 3-step displacement metric separates real
//!    movers from parallax and alignment artifacts.
//! 5. [`appearance`] — pluggable local classifier (32×32 crops) and detector
//!    (320×320 windows) refine the survivors.
//!
//! [`pipeline`] wires the stages behind a streaming `push_frame`/`flush`
//! API, [`synth`] renders ground-truthed test clips, [`eval`] scores
//! detections and [`seqio`] handles the on-disk formats.

pub mod align;
pub mod appearance;
mod config;
pub mod eval;
pub mod imgproc;
pub mod mfe;
mod par;
pub mod pipeline;
pub mod seqio;
pub mod synth;
pub mod track;
pub mod trajfilter;

pub use config::{ConfigError, PipelineConfig};
pub use imgproc::{BinaryMask, BoundingBox, Frame};
pub use pipeline::{FrameDiagnostics, FrameResult, Pipeline, PipelineError};
