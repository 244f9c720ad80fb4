//! SORT-style multi-object tracking: constant-velocity Kalman prediction,
//! IoU-gated Hungarian association and track lifecycle management.

mod hungarian;
mod kalman;

pub use hungarian::hungarian;
pub use kalman::KalmanBoxState;

use crate::imgproc::BoundingBox;
use std::collections::VecDeque;

/// Intersection-over-union of two boxes, in [0, 1].
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = match a.intersection(b) {
        Some(i) => i.area(),
        None => return 0.0,
    };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(pub u64);

impl std::fmt::Display for TrackId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// One tracked object: filter state plus a bounded history of the boxes it
/// was associated with, newest last.
#[derive(Clone, Debug)]
pub struct Track {
    pub id: TrackId,
    pub state: KalmanBoxState,
    /// Frames since creation.
    pub age: u64,
    /// Frames since the last successful association.
    pub time_since_update: u64,
    /// Consecutive frames with an association.
    pub hit_streak: u64,
    history: VecDeque<(u64, BoundingBox)>,
    history_capacity: usize,
}

impl Track {
    fn new(id: TrackId, frame_index: u64, det: &BoundingBox, history_capacity: usize) -> Self {
        let mut history = VecDeque::with_capacity(history_capacity);
        history.push_back((frame_index, *det));
        Self {
            id,
            state: KalmanBoxState::new(det),
            age: 0,
            time_since_update: 0,
            hit_streak: 1,
            history,
            history_capacity,
        }
    }

    fn record(&mut self, frame_index: u64, det: &BoundingBox) {
        if self.history.len() == self.history_capacity {
            self.history.pop_front();
        }
        debug_assert!(self.history.back().is_none_or(|(f, _)| *f < frame_index));
        self.history.push_back((frame_index, *det));
    }

    /// Associated `(frame_index, box)` pairs, oldest first.
    pub fn history(&self) -> impl ExactSizeIterator<Item = &(u64, BoundingBox)> {
        self.history.iter()
    }

    /// Build a track with a prescribed history (test fixtures).
    #[cfg(test)]
    pub(crate) fn from_history(id: TrackId, entries: &[(u64, BoundingBox)]) -> Self {
        assert!(!entries.is_empty());
        let mut track = Track::new(id, entries[0].0, &entries[0].1, entries.len().max(16));
        for (frame, b) in &entries[1..] {
            track.record(*frame, b);
        }
        track.age = entries.len() as u64 - 1;
        track
    }

    /// The most recently associated box.
    pub fn last_box(&self) -> &BoundingBox {
        &self.history.back().expect("tracks always hold one box").1
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrackerParams {
    /// Associations below this IoU are discarded even if assigned.
    pub iou_gate: f64,
    /// Tracks die once unassociated for more than this many steps.
    pub max_age: u64,
    /// Associations required before a track is reported.
    pub min_hits: u64,
    /// History ring-buffer capacity per track.
    pub history_capacity: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self { iou_gate: 0.3, max_age: 3, min_hits: 1, history_capacity: 16 }
    }
}

/// Outcome of one tracker step.
#[derive(Clone, Debug, Default)]
pub struct StepResult {
    /// Tracks associated this frame, with the detection box they received.
    pub matched: Vec<(TrackId, BoundingBox)>,
    pub new_ids: Vec<TrackId>,
    pub dead_ids: Vec<TrackId>,
}

/// Single-writer tracker; callers must serialize `step` externally.
#[derive(Clone, Debug)]
pub struct SortTracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u64,
}

impl SortTracker {
    pub fn new(params: TrackerParams) -> Self {
        Self { params, tracks: Vec::new(), next_id: 1 }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn get(&self, id: TrackId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    /// Predict all tracks, associate `detections`, update matched filters,
    /// spawn tracks for unmatched detections and retire stale tracks.
    pub fn step(&mut self, detections: &[BoundingBox], frame_index: u64) -> StepResult {
        let mut result = StepResult::default();

        let predictions: Vec<BoundingBox> =
            self.tracks.iter_mut().map(|t| t.state.predict()).collect();
        for t in &mut self.tracks {
            t.age += 1;
        }

        // Assignment on cost 1 - IoU, gated afterwards.
        let mut matched_det = vec![false; detections.len()];
        let mut matched_track = vec![false; self.tracks.len()];
        if !self.tracks.is_empty() && !detections.is_empty() {
            let cost: Vec<Vec<f64>> = predictions
                .iter()
                .map(|p| detections.iter().map(|d| 1.0 - iou(p, d)).collect())
                .collect();
            for (ti, dj) in hungarian(&cost).into_iter().enumerate() {
                let Some(dj) = dj else { continue };
                if iou(&predictions[ti], &detections[dj]) < self.params.iou_gate {
                    continue;
                }
                matched_track[ti] = true;
                matched_det[dj] = true;
                let track = &mut self.tracks[ti];
                track.state.update(&detections[dj]);
                track.time_since_update = 0;
                track.hit_streak += 1;
                track.record(frame_index, &detections[dj]);
                result.matched.push((track.id, detections[dj]));
            }
        }

        for (ti, matched) in matched_track.iter().enumerate() {
            if !matched {
                self.tracks[ti].time_since_update += 1;
                self.tracks[ti].hit_streak = 0;
            }
        }

        for (dj, matched) in matched_det.iter().enumerate() {
            if !matched {
                let id = TrackId(self.next_id);
                self.next_id += 1;
                self.tracks.push(Track::new(
                    id,
                    frame_index,
                    &detections[dj],
                    self.params.history_capacity,
                ));
                result.new_ids.push(id);
            }
        }

        // Retire after association so a track missing its gate this frame
        // still counts this step against its age.
        let max_age = self.params.max_age;
        self.tracks.retain(|t| {
            if t.time_since_update > max_age {
                result.dead_ids.push(t.id);
                false
            } else {
                true
            }
        });

        result
    }

    pub fn min_hits(&self) -> u64 {
        self.params.min_hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        let b = bx(20.0, 20.0, 5.0, 5.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_quarter_overlap() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(5.0, 5.0, 10.0, 10.0);
        assert_abs_diff_eq!(iou(&a, &b), 25.0 / 175.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_tracker_spawns_tracks() {
        let mut t = SortTracker::new(TrackerParams::default());
        let r = t.step(&[bx(0.0, 0.0, 10.0, 10.0), bx(50.0, 50.0, 8.0, 8.0)], 0);
        assert_eq!(r.new_ids.len(), 2);
        assert!(r.matched.is_empty());
        assert!(r.dead_ids.is_empty());
        assert_eq!(t.tracks().len(), 2);
    }

    #[test]
    fn gate_boundary_rejects_low_iou() {
        let mut t = SortTracker::new(TrackerParams::default());
        t.step(&[bx(0.0, 0.0, 10.0, 10.0)], 0);
        // IoU(prediction, detection) = 45/155 ≈ 0.2903 < 0.3: unmatched.
        let det = bx(5.5, 0.0, 10.0, 10.0);
        let r = t.step(&[det], 1);
        assert!(r.matched.is_empty());
        assert_eq!(r.new_ids.len(), 1);
        let old = t.get(TrackId(1)).unwrap();
        assert_eq!(old.time_since_update, 1);
        assert_eq!(t.tracks().len(), 2);
    }

    #[test]
    fn gate_keeps_iou_at_threshold() {
        let mut t = SortTracker::new(TrackerParams::default());
        t.step(&[bx(0.0, 0.0, 10.0, 10.0)], 0);
        // Overlap 50: IoU = 50/150 = 1/3 >= 0.3: matched.
        let r = t.step(&[bx(5.0, 0.0, 10.0, 10.0)], 1);
        assert_eq!(r.matched.len(), 1);
    }

    #[test]
    fn track_dies_on_fourth_missed_step() {
        let mut t = SortTracker::new(TrackerParams::default());
        t.step(&[bx(0.0, 0.0, 10.0, 10.0)], 0);
        for step in 1..=3 {
            let r = t.step(&[], step);
            assert!(r.dead_ids.is_empty(), "alive at missed step {step}");
            assert!(t.get(TrackId(1)).unwrap().time_since_update <= 3);
        }
        let r = t.step(&[], 4);
        assert_eq!(r.dead_ids, vec![TrackId(1)]);
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn ids_are_never_reused() {
        let mut t = SortTracker::new(TrackerParams::default());
        let mut seen = std::collections::HashSet::new();
        for step in 0..50u64 {
            // Detections appear far apart so nothing ever associates; each
            // track dies after max_age misses.
            let offset = (step * 97 % 400) as f64;
            let r = t.step(&[bx(offset, offset, 5.0, 5.0)], step);
            for id in r.new_ids {
                assert!(seen.insert(id), "{id} reused");
            }
        }
    }

    #[test]
    fn association_is_one_to_one() {
        let mut t = SortTracker::new(TrackerParams::default());
        let dets0 = [bx(0.0, 0.0, 10.0, 10.0), bx(6.0, 0.0, 10.0, 10.0)];
        t.step(&dets0, 0);
        let dets1 = [bx(1.0, 0.0, 10.0, 10.0), bx(7.0, 0.0, 10.0, 10.0)];
        let r = t.step(&dets1, 1);
        assert_eq!(r.matched.len(), 2);
        let ids: std::collections::HashSet<_> = r.matched.iter().map(|(id, _)| id).collect();
        assert_eq!(ids.len(), 2);
        let boxes: Vec<_> = r.matched.iter().map(|(_, b)| b.x as i64).collect();
        let mut sorted = boxes.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 7]);
    }

    #[test]
    fn history_is_bounded_and_ordered() {
        let params = TrackerParams { history_capacity: 4, ..Default::default() };
        let mut t = SortTracker::new(params);
        for step in 0..10u64 {
            t.step(&[bx(step as f64, 0.0, 10.0, 10.0)], step);
        }
        let track = &t.tracks()[0];
        let frames: Vec<u64> = track.history().map(|(f, _)| *f).collect();
        assert_eq!(frames, vec![6, 7, 8, 9]);
    }
}
