//! Trajectory classification: measure how far a track has really moved over
//! a 3-step lookback after compensating camera motion, and reject tracks
//! whose displacement stays small (parallax and alignment artifacts).

use crate::align::{transform_box, AlignError, Homography};
use crate::imgproc::BoundingBox;
use crate::track::{Track, TrackId};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BufferError {
    #[error("no homography stored for step ending at frame {0}")]
    MissingStep(u64),
    #[error("span {from}..{to} is not a multiple of stride {stride}")]
    MisalignedSpan { from: u64, to: u64, stride: u64 },
}

/// Rolling store of per-step homographies. The entry at `frame_index` maps
/// `frame_index - stride` coordinates into `frame_index` coordinates.
/// Alignment-failure frames simply have no entry.
#[derive(Clone, Debug)]
pub struct HomographyBuffer {
    stride: u64,
    capacity: usize,
    entries: VecDeque<(u64, Homography)>,
}

impl HomographyBuffer {
    pub fn new(stride: u64, capacity: usize) -> Self {
        assert!(stride >= 1 && capacity >= 1);
        Self { stride, capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn stride(&self) -> u64 {
        self.stride
    }

    /// Record the homography for the step ending at `frame_index`.
    pub fn push(&mut self, frame_index: u64, h: Homography) {
        debug_assert!(self.entries.back().is_none_or(|(f, _)| *f < frame_index));
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((frame_index, h));
    }

    fn get(&self, frame_index: u64) -> Option<&Homography> {
        self.entries.iter().rev().find(|(f, _)| *f == frame_index).map(|(_, h)| h)
    }

    /// Product of the per-step homographies mapping `from_index` coordinates
    /// into `to_index` coordinates. Every intermediate step must be present.
    pub fn composed(&self, from_index: u64, to_index: u64) -> Result<Homography, BufferError> {
        if from_index == to_index {
            return Ok(Homography::identity());
        }
        assert!(from_index < to_index, "composition runs forward in time");
        if (to_index - from_index) % self.stride != 0 {
            return Err(BufferError::MisalignedSpan {
                from: from_index,
                to: to_index,
                stride: self.stride,
            });
        }
        let mut acc = Homography::identity();
        let mut step_end = from_index + self.stride;
        while step_end <= to_index {
            let h = self.get(step_end).ok_or(BufferError::MissingStep(step_end))?;
            // Later steps apply after earlier ones.
            acc = h.compose(&acc).map_err(|_: AlignError| BufferError::MissingStep(step_end))?;
            step_end += self.stride;
        }
        Ok(acc)
    }
}

/// How the displacement is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricMode {
    /// Center distance over the diagonal of the joint enclosing box. Stays
    /// strictly below 1 for boxes with positive extents.
    Enclosing,
    /// Center distance over the diagonal of the newest box alone; values
    /// at or above 1 are attainable.
    SelfDiag,
}

/// Center distance between two boxes over the diagonal of their smallest
/// enclosing box. Coincident degenerate boxes yield 0.
pub fn distance_metric(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let rho = (ax - bx).hypot(ay - by);
    let enclosing = a.union_bounds(b);
    let d = enclosing.w.hypot(enclosing.h);
    if d == 0.0 {
        0.0
    } else {
        rho / d
    }
}

fn distance_metric_self(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let rho = (ax - bx).hypot(ay - by);
    let d = b.w.hypot(b.h);
    if d == 0.0 {
        0.0
    } else {
        rho / d
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrajParams {
    /// Tracks move iff the displacement metric reaches this value.
    pub tau_d: f64,
    pub mode: MetricMode,
}

impl Default for TrajParams {
    fn default() -> Self {
        Self { tau_d: 0.5, mode: MetricMode::Enclosing }
    }
}

/// Hard per-frame verdict for one track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryVerdict {
    pub track_id: TrackId,
    /// True iff the track is classified as a genuine mover.
    pub moving: bool,
    /// The displacement metric that produced the verdict; 0 when the
    /// lookback was unavailable.
    pub metric: f64,
}

/// Classify one track. The history must hold at least 4 boxes (so the
/// 3-step lookback has both endpoints); the oldest lookback box is aligned
/// into the newest box's frame before measuring. Missing homography steps
/// classify the track as not moving, never as an error.
pub fn classify(track: &Track, buf: &HomographyBuffer, params: &TrajParams) -> TrajectoryVerdict {
    let suppressed =
        TrajectoryVerdict { track_id: track.id, moving: false, metric: 0.0 };
    let n = track.history().len();
    if n < 4 {
        return suppressed;
    }
    let hist: Vec<&(u64, BoundingBox)> = track.history().collect();
    let (old_frame, old_box) = hist[n - 4];
    let (new_frame, new_box) = hist[n - 1];
    let Ok(h) = buf.composed(*old_frame, *new_frame) else {
        return suppressed;
    };
    let aligned = transform_box(&h, old_box);
    let metric = match params.mode {
        MetricMode::Enclosing => distance_metric(&aligned, new_box),
        MetricMode::SelfDiag => distance_metric_self(&aligned, new_box),
    };
    TrajectoryVerdict { track_id: track.id, moving: metric >= params.tau_d, metric }
}
