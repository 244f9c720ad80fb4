//! End-to-end streaming orchestration: latency-buffered frame ingestion,
//! alignment, motion feature enhancement, tracking, trajectory filtering and
//! the local appearance stages.
//!
//! Differencing against the frame k steps ahead makes the stream k frames
//! late by contract: pushing frame `t + k` emits the result for frame `t`.

use crate::align::{
    estimate_homography, lk_track_pyramids, sample_grid, Homography, LkParams, Point, Pyramid,
    RansacParams,
};
use crate::appearance::{
    classify_crop, detect_crop, CentroidDetector, CropClassifier, CropDetector, Detection,
    PassthroughClassifier, Stage,
};
pub use crate::config::{ConfigError, PipelineConfig};
use crate::eval::FrameSink;
use crate::imgproc::{crop, crop_clamped, resize_bilinear, BinaryMask, BoundingBox, Frame};
use crate::mfe::{enhance, enhance_two_frame, MfeParams, MotionCandidates};
use crate::track::{iou, SortTracker, TrackerParams};
use crate::trajfilter::{classify, HomographyBuffer, TrajParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("frame {got} out of order: expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("frame size changed from {0}x{1} to {2}x{3}")]
    SizeChanged(u32, u32, u32, u32),
    #[error("pipeline already flushed")]
    Flushed,
}

/// Per-frame counters for observability and ablation bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameDiagnostics {
    /// Motion candidates out of the MFE stage.
    pub candidates: usize,
    /// Tracks alive after association.
    pub tracks_alive: usize,
    /// Tracks hidden by the trajectory filter this frame.
    pub tf_suppressed: usize,
    /// Tracks rejected by the appearance classifier.
    pub lac_rejected: usize,
    /// Tracks whose local detector window produced nothing.
    pub lad_rejected: usize,
    /// Backend failures; the affected candidates are dropped.
    pub backend_errors: usize,
    /// Alignment failed and MFE was skipped this frame.
    pub alignment_degraded: bool,
    /// Tail frame processed with two-frame differencing.
    pub fusion_degraded: bool,
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
    pub diagnostics: FrameDiagnostics,
}

struct Buffered {
    frame: Frame,
    pyramid: Pyramid,
}

/// The full detector. Single-caller: one `push_frame` at a time.
pub struct Pipeline {
    cfg: PipelineConfig,
    classifier: Box<dyn CropClassifier>,
    detector: Box<dyn CropDetector>,
    buffer: VecDeque<Buffered>,
    grid: Vec<Point>,
    dims: Option<(u32, u32)>,
    expected_next: Option<u64>,
    next_emit: Option<u64>,
    tracker: SortTracker,
    hbuf: HomographyBuffer,
    rng: ChaCha8Rng,
    flushed: bool,
}

impl Pipeline {
    pub fn new(
        cfg: PipelineConfig,
        classifier: Box<dyn CropClassifier>,
        detector: Box<dyn CropDetector>,
    ) -> Self {
        let tracker = SortTracker::new(TrackerParams {
            iou_gate: cfg.iou_gate,
            max_age: cfg.max_age,
            min_hits: cfg.min_hits,
            history_capacity: cfg.history_capacity,
        });
        let hbuf = HomographyBuffer::new(cfg.k, cfg.history_capacity.max(16) * 2);
        let rng = ChaCha8Rng::seed_from_u64(cfg.ransac_seed);
        Self {
            cfg,
            classifier,
            detector,
            buffer: VecDeque::new(),
            grid: Vec::new(),
            dims: None,
            expected_next: None,
            next_emit: None,
            tracker,
            hbuf,
            rng,
            flushed: false,
        }
    }

    /// Pipeline with the built-in baseline backends (accept-all classifier,
    /// blob-extraction detector).
    pub fn with_builtin(cfg: PipelineConfig) -> Self {
        Self::new(cfg, Box::new(PassthroughClassifier), Box::new(CentroidDetector::default()))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn lk_params(&self) -> LkParams {
        LkParams {
            levels: self.cfg.lk_levels,
            window: self.cfg.lk_window,
            max_iters: self.cfg.lk_max_iters,
            epsilon: self.cfg.lk_epsilon,
            ..LkParams::default()
        }
    }

    fn mfe_params(&self) -> MfeParams {
        MfeParams {
            diff_threshold: self.cfg.diff_threshold,
            fusion: self.cfg.fusion,
            morph_iterations: self.cfg.morph_iterations,
            min_blob_area: self.cfg.min_blob_area,
        }
    }

    /// Ingest the next frame. Returns the result for frame `index - k` once
    /// enough lookahead has arrived.
    pub fn push_frame(&mut self, frame: Frame) -> Result<Option<FrameResult>, PipelineError> {
        if self.flushed {
            return Err(PipelineError::Flushed);
        }
        if let Some(expected) = self.expected_next {
            if frame.index != expected {
                return Err(PipelineError::OutOfOrder { expected, got: frame.index });
            }
        }
        match self.dims {
            None => {
                self.dims = Some((frame.width(), frame.height()));
                self.grid = sample_grid(
                    frame.width(),
                    frame.height(),
                    self.cfg.grid_cols,
                    self.cfg.grid_rows,
                )
                .expect("config grid fits validated frame sizes");
                self.next_emit = Some(frame.index + self.cfg.k);
            }
            Some((w, h)) if (w, h) != (frame.width(), frame.height()) => {
                return Err(PipelineError::SizeChanged(w, h, frame.width(), frame.height()));
            }
            _ => {}
        }
        self.expected_next = Some(frame.index + 1);

        let pyramid = Pyramid::build(&frame, self.cfg.lk_levels);
        self.buffer.push_back(Buffered { frame, pyramid });

        let emit = self.next_emit.expect("set on first push");
        let newest = self.expected_next.unwrap() - 1;
        if newest == emit + self.cfg.k {
            let result = self.process(emit, false);
            self.next_emit = Some(emit + 1);
            self.trim_buffer();
            return Ok(Some(result));
        }
        Ok(None)
    }

    /// Process remaining tail frames with two-frame differencing (no next
    /// frame exists for them). Further pushes are rejected.
    pub fn flush(&mut self) -> Result<Vec<FrameResult>, PipelineError> {
        if self.flushed {
            return Ok(Vec::new());
        }
        self.flushed = true;
        let (Some(mut emit), Some(expected)) = (self.next_emit, self.expected_next) else {
            return Ok(Vec::new());
        };
        let last = expected - 1;
        let mut results = Vec::new();
        while emit <= last {
            results.push(self.process(emit, true));
            emit += 1;
            self.next_emit = Some(emit);
            self.trim_buffer();
        }
        Ok(results)
    }

    fn trim_buffer(&mut self) {
        let emit = self.next_emit.expect("trim only runs after first push");
        while let Some(front) = self.buffer.front() {
            if front.frame.index + self.cfg.k < emit {
                self.buffer.pop_front();
            } else {
                break;
            }
        }
    }

    fn buffered(&self, index: u64) -> &Buffered {
        let first = self.buffer.front().expect("buffer non-empty").frame.index;
        &self.buffer[(index - first) as usize]
    }

    /// Track the keypoint grid from the frame at `src` into the frame at
    /// `dst` and estimate the homography mapping src coordinates onto dst.
    fn estimate_pair(&mut self, src: u64, dst: u64) -> Option<Homography> {
        let lk = self.lk_params();
        let matches = lk_track_pyramids(
            &self.buffered(src).pyramid,
            &self.buffered(dst).pyramid,
            &self.grid,
            &lk,
        );
        let params = RansacParams {
            reproj_threshold: self.cfg.ransac_reproj_threshold,
            confidence: self.cfg.ransac_confidence,
            max_iters: self.cfg.ransac_max_iters,
        };
        estimate_homography(&matches, &params, &mut self.rng).ok().map(|(h, _)| h)
    }

    fn process(&mut self, t: u64, tail: bool) -> FrameResult {
        let k = self.cfg.k;
        let mut diag = FrameDiagnostics { fusion_degraded: tail, ..Default::default() };

        let h_prev = self.estimate_pair(t - k, t);
        let h_next = if tail || self.buffer.back().expect("non-empty").frame.index < t + k {
            None
        } else {
            self.estimate_pair(t + k, t)
        };

        let use_two_frame = tail;
        let aligned = if use_two_frame { h_prev.is_some() } else { h_prev.is_some() && h_next.is_some() };

        let candidates = if aligned {
            let mfe_params = self.mfe_params();
            let outcome = if use_two_frame {
                enhance_two_frame(
                    &self.buffered(t - k).frame,
                    &self.buffered(t).frame,
                    h_prev.as_ref().unwrap(),
                    &mfe_params,
                )
            } else {
                enhance(
                    &self.buffered(t - k).frame,
                    &self.buffered(t).frame,
                    &self.buffered(t + k).frame,
                    h_prev.as_ref().unwrap(),
                    h_next.as_ref().unwrap(),
                    &mfe_params,
                )
            };
            outcome.ok()
        } else {
            None
        };
        let candidates = candidates.unwrap_or_else(|| {
            let (w, h) = self.dims.unwrap();
            diag.alignment_degraded = true;
            MotionCandidates {
                frame_index: t,
                boxes: Vec::new(),
                mask: BinaryMask::empty(w, h),
                alignment_degraded: true,
            }
        });
        diag.candidates = candidates.boxes.len();

        // The per-step homography feeds trajectory alignment even when the
        // next-side estimate failed.
        if let Some(hp) = h_prev {
            self.hbuf.push(t, hp);
        }

        self.tracker.step(&candidates.boxes, t);
        diag.tracks_alive = self.tracker.tracks().len();

        let detections = self.stage_outputs(t, &mut diag);
        FrameResult { frame_index: t, detections, diagnostics: diag }
    }

    /// Run the trajectory and appearance stages over the tracks associated
    /// at frame `t` and assemble the output detections.
    fn stage_outputs(&mut self, t: u64, diag: &mut FrameDiagnostics) -> Vec<Detection> {
        let traj = TrajParams { tau_d: self.cfg.tau_d, mode: self.cfg.metric_mode };
        let min_hits = self.cfg.min_hits;

        // Phase 1 (read-only): trajectory verdicts over track snapshots.
        let mut survivors: Vec<BoundingBox> = Vec::new();
        for track in self.tracker.tracks() {
            if track.time_since_update != 0 || track.hit_streak < min_hits {
                continue;
            }
            if self.cfg.enable_tf && !classify(track, &self.hbuf, &traj).moving {
                diag.tf_suppressed += 1;
                continue;
            }
            survivors.push(*track.last_box());
        }

        // Phase 2 (backends): appearance gates per surviving track.
        let cur = self.buffered(t).frame.clone();
        let mut plain: Vec<Detection> = Vec::new();
        let mut refined: Vec<Detection> = Vec::new();
        for tbox in survivors {
            let mut stage = Stage::Motion;
            if self.cfg.enable_lac {
                let patch = match crop(&cur, &tbox) {
                    Ok(p) => p,
                    Err(_) => continue, // box degenerated out of bounds
                };
                let input = resize_bilinear(&patch, 32, 32);
                match classify_crop(self.classifier.as_mut(), &input) {
                    Ok(score) if score.value() >= self.cfg.lac_threshold => {
                        stage = Stage::Classified;
                    }
                    Ok(_) => {
                        diag.lac_rejected += 1;
                        continue;
                    }
                    Err(_) => {
                        diag.backend_errors += 1;
                        continue;
                    }
                }
            }
            if self.cfg.enable_lad {
                let (window, offset) = crop_clamped(&cur, tbox.center(), self.cfg.lad_crop);
                match detect_crop(self.detector.as_mut(), &window, offset, self.cfg.lad_conf) {
                    Ok(dets) if !dets.is_empty() => refined.extend(dets),
                    Ok(_) => diag.lad_rejected += 1,
                    Err(_) => diag.backend_errors += 1,
                }
            } else {
                plain.push(Detection { bbox: tbox, confidence: 1.0, stage });
            }
        }

        plain.extend(dedup_refined(refined));
        plain
    }
}

/// Overlapping windows around nearby tracks find the same object; keep the
/// higher-confidence copy of any pair with IoU above 0.5.
fn dedup_refined(mut dets: Vec<Detection>) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.bbox.x.partial_cmp(&b.bbox.x).unwrap())
            .then(a.bbox.y.partial_cmp(&b.bbox.y).unwrap())
    });
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= 0.5) {
            kept.push(d);
        }
    }
    kept
}

impl FrameSink for Pipeline {
    fn process_frame(&mut self, frame: Frame) {
        self.push_frame(frame).expect("measurement streams are well-formed");
    }
    fn finish(&mut self) {
        self.flush().expect("flush after measurement");
    }
}
