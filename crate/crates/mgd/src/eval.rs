//! Detection scoring (precision / recall / F1 / AP at a fixed IoU threshold)
//! and wall-clock throughput measurement.

use crate::appearance::Detection;
use crate::imgproc::{BoundingBox, Frame};
use crate::track::iou;
use std::time::Instant;

/// A detection tagged with the frame it belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionRecord {
    pub frame: u64,
    pub det: Detection,
}

/// Per-frame ground-truth boxes with object identities.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth {
    frames: Vec<Vec<(u64, BoundingBox)>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: u64, object_id: u64, bbox: BoundingBox) {
        let idx = frame as usize;
        if self.frames.len() <= idx {
            self.frames.resize(idx + 1, Vec::new());
        }
        self.frames[idx].push((object_id, bbox));
    }

    pub fn boxes(&self, frame: u64) -> &[(u64, BoundingBox)] {
        self.frames.get(frame as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// All `(frame, id, box)` records in frame order.
    pub fn records(&self) -> impl Iterator<Item = (u64, u64, BoundingBox)> + '_ {
        self.frames
            .iter()
            .enumerate()
            .flat_map(|(f, boxes)| boxes.iter().map(move |(id, b)| (f as u64, *id, *b)))
    }

    /// Keep only frames at or after `first_frame`.
    pub fn from_frame(&self, first_frame: u64) -> GroundTruth {
        let mut out = GroundTruth::new();
        for (f, id, b) in self.records() {
            if f >= first_frame {
                out.push(f, id, b);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Score `dets` against `gt`, counting a detection as a true positive when
/// its IoU with an unmatched same-frame ground-truth box is strictly above
/// `iou_threshold`.
///
/// Matching is greedy in one global pass over detections ordered by
/// descending confidence (ties: lower frame, then lower x, then lower y);
/// each detection takes the unmatched box it overlaps most. Precision,
/// recall and F1 describe the full detection set; AP integrates the
/// all-point-interpolated precision envelope over the same ordering. With no
/// detections precision is reported as 1; with no ground truth recall is 1.
pub fn evaluate(dets: &[DetectionRecord], gt: &GroundTruth, iou_threshold: f64) -> EvalReport {
    assert!(iou_threshold > 0.0 && iou_threshold < 1.0);
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let da = &dets[a];
        let db = &dets[b];
        db.det
            .confidence
            .partial_cmp(&da.det.confidence)
            .unwrap()
            .then(da.frame.cmp(&db.frame))
            .then(da.det.bbox.x.partial_cmp(&db.det.bbox.x).unwrap())
            .then(da.det.bbox.y.partial_cmp(&db.det.bbox.y).unwrap())
    });

    let mut matched: Vec<Vec<bool>> =
        (0..gt.num_frames()).map(|f| vec![false; gt.boxes(f as u64).len()]).collect();
    let total_gt = gt.total_boxes();

    let mut tp_flags = Vec::with_capacity(dets.len());
    for &i in &order {
        let rec = &dets[i];
        let boxes = gt.boxes(rec.frame);
        let mut best: Option<(usize, f64)> = None;
        if (rec.frame as usize) < matched.len() {
            for (j, (_, gbox)) in boxes.iter().enumerate() {
                if matched[rec.frame as usize][j] {
                    continue;
                }
                let ov = iou(&rec.det.bbox, gbox);
                if ov > iou_threshold && best.is_none_or(|(_, b)| ov > b) {
                    best = Some((j, ov));
                }
            }
        }
        match best {
            Some((j, _)) => {
                matched[rec.frame as usize][j] = true;
                tp_flags.push(true);
            }
            None => tp_flags.push(false),
        }
    }

    let tp = tp_flags.iter().filter(|&&t| t).count();
    let fp = dets.len() - tp;
    let fn_ = total_gt - tp;

    let precision = if dets.is_empty() { 1.0 } else { tp as f64 / dets.len() as f64 };
    let recall = if total_gt == 0 { 1.0 } else { tp as f64 / total_gt as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    let ap = if total_gt == 0 {
        if dets.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        average_precision(&tp_flags, total_gt)
    };

    EvalReport {
        precision,
        recall,
        f1,
        ap,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

/// Area under the all-point-interpolated precision-recall curve for
/// detections already ordered by decreasing confidence.
fn average_precision(tp_flags: &[bool], total_gt: usize) -> f64 {
    let mut curve = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / total_gt as f64;
        curve.push((recall, precision));
    }
    // Precision envelope from the right, integrated over recall steps.
    let mut ap = 0.0;
    let mut max_precision = 0.0f64;
    let mut prev_recall = f64::NAN;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(curve.len());
    for &(recall, precision) in curve.iter().rev() {
        max_precision = max_precision.max(precision);
        if recall != prev_recall {
            steps.push((recall, max_precision));
            prev_recall = recall;
        } else if let Some(last) = steps.last_mut() {
            last.1 = max_precision;
        }
    }
    steps.reverse();
    let mut prev_recall = 0.0;
    for (recall, precision) in steps {
        if recall > prev_recall {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    ap
}

/// Anything that can consume a frame stream. Implemented by the pipeline and
/// by measurement stubs.
pub trait FrameSink {
    fn process_frame(&mut self, frame: Frame);
    fn finish(&mut self);
}

/// Wall-clock frames per second over the full run, frames preloaded by the
/// caller, including whatever work the sink performs plus its final flush.
pub fn measure_fps<S: FrameSink + ?Sized>(sink: &mut S, frames: &[Frame]) -> f64 {
    assert!(frames.len() >= 30, "need at least 30 frames for a stable figure");
    let start = Instant::now();
    for f in frames {
        sink.process_frame(f.clone());
    }
    sink.finish();
    frames.len() as f64 / start.elapsed().as_secs_f64()
}
