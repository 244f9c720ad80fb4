//! Motion feature enhancement: warp the stride-k neighbors onto the current
//! frame, difference and binarize both pairs, fuse the masks and post-process
//! into candidate boxes.

use crate::align::{warp_perspective, Homography, Warped};
use crate::imgproc::{
    abs_diff, binarize, connected_components, mask_and, mask_or, morph_close, morph_open,
    BinaryMask, BoundingBox, Frame, ImageError,
};
use crate::par;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MfeError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("frame indices {prev}, {cur}, {next} are not symmetric around the current frame")]
    IndexContract { prev: u64, cur: u64, next: u64 },
    #[error("singular homography")]
    SingularHomography,
}

/// How the two binarized difference masks combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Previous-pair difference only.
    TwoFrame,
    /// Intersection of the two pair differences (classical three-frame).
    ThreeFrameAnd,
    /// Union of the two pair differences.
    ThreeFrameOr,
}

impl std::str::FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two_frame" => Ok(Self::TwoFrame),
            "three_frame_and" => Ok(Self::ThreeFrameAnd),
            "three_frame_or" => Ok(Self::ThreeFrameOr),
            other => Err(format!("unknown fusion mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MfeParams {
    /// Difference intensities at or above this are foreground.
    pub diff_threshold: u8,
    pub fusion: FusionMode,
    pub morph_iterations: usize,
    /// Components with fewer pixels than this are discarded.
    pub min_blob_area: usize,
}

impl Default for MfeParams {
    fn default() -> Self {
        Self {
            diff_threshold: 5,
            fusion: FusionMode::ThreeFrameOr,
            morph_iterations: 1,
            min_blob_area: 15,
        }
    }
}

/// Candidate moving objects for one frame.
#[derive(Clone, Debug)]
pub struct MotionCandidates {
    pub frame_index: u64,
    pub boxes: Vec<BoundingBox>,
    /// The post-processed motion mask the boxes were extracted from.
    pub mask: BinaryMask,
    pub alignment_degraded: bool,
}

fn fused_mask(
    cur: &Frame,
    warped_prev: &Warped,
    warped_next: Option<&Warped>,
    params: &MfeParams,
) -> Result<(BinaryMask, BinaryMask), MfeError> {
    let d_prev = binarize(&abs_diff(cur, &warped_prev.frame)?, params.diff_threshold);
    let (fused, validity) = match (params.fusion, warped_next) {
        (FusionMode::TwoFrame, _) | (_, None) => (d_prev, warped_prev.validity.clone()),
        (mode, Some(next)) => {
            let d_next = binarize(&abs_diff(cur, &next.frame)?, params.diff_threshold);
            let fused = match mode {
                FusionMode::ThreeFrameAnd => mask_and(&d_prev, &d_next)?,
                _ => mask_or(&d_prev, &d_next)?,
            };
            (fused, mask_and(&warped_prev.validity, &next.validity)?)
        }
    };
    // Pixels invalid in either warp are background.
    Ok((mask_and(&fused, &validity)?, validity))
}

/// Three-frame enhancement. `h_prev` maps the previous frame onto the current
/// one, `h_next` the next frame; indices must be symmetric around `cur`.
pub fn enhance(
    prev: &Frame,
    cur: &Frame,
    next: &Frame,
    h_prev: &Homography,
    h_next: &Homography,
    params: &MfeParams,
) -> Result<MotionCandidates, MfeError> {
    if prev.index >= cur.index || next.index <= cur.index
        || cur.index - prev.index != next.index - cur.index
    {
        return Err(MfeError::IndexContract { prev: prev.index, cur: cur.index, next: next.index });
    }
    if (prev.width(), prev.height()) != (cur.width(), cur.height())
        || (next.width(), next.height()) != (cur.width(), cur.height())
    {
        return Err(ImageError::DimensionMismatch(
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height(),
        )
        .into());
    }

    // The two warps are independent; run them as one fork-join pair.
    let (warped_prev, warped_next) = par::join(
        || warp_perspective(prev, h_prev),
        || warp_perspective(next, h_next),
    );
    let warped_prev = warped_prev.map_err(|_| MfeError::SingularHomography)?;
    let warped_next = warped_next.map_err(|_| MfeError::SingularHomography)?;

    let (fused, validity) = fused_mask(cur, &warped_prev, Some(&warped_next), params)?;
    let (mask, boxes) = post_process_masked(&fused, Some(&validity), params)?;
    Ok(MotionCandidates { frame_index: cur.index, boxes, mask, alignment_degraded: false })
}

/// Two-frame degraded enhancement for stream tails where no next frame
/// exists. Only the previous pair contributes.
pub fn enhance_two_frame(
    prev: &Frame,
    cur: &Frame,
    h_prev: &Homography,
    params: &MfeParams,
) -> Result<MotionCandidates, MfeError> {
    if prev.index >= cur.index {
        return Err(MfeError::IndexContract { prev: prev.index, cur: cur.index, next: cur.index });
    }
    if (prev.width(), prev.height()) != (cur.width(), cur.height()) {
        return Err(ImageError::DimensionMismatch(
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height(),
        )
        .into());
    }
    let warped_prev = warp_perspective(prev, h_prev).map_err(|_| MfeError::SingularHomography)?;
    let (fused, validity) = fused_mask(cur, &warped_prev, None, params)?;
    let (mask, boxes) = post_process_masked(&fused, Some(&validity), params)?;
    Ok(MotionCandidates { frame_index: cur.index, boxes, mask, alignment_degraded: false })
}

/// Open, close, relabel and keep components at or above the blob-area floor.
pub fn post_process(mask: &BinaryMask, params: &MfeParams) -> Vec<BoundingBox> {
    post_process_masked(mask, None, params).expect("no validity mask to mismatch").1
}

/// As [`post_process`], but pixels outside `validity` are forced back to
/// background after morphology so closing cannot bleed into invalid borders.
fn post_process_masked(
    mask: &BinaryMask,
    validity: Option<&BinaryMask>,
    params: &MfeParams,
) -> Result<(BinaryMask, Vec<BoundingBox>), MfeError> {
    let mut processed = morph_close(&morph_open(mask, params.morph_iterations), params.morph_iterations);
    if let Some(validity) = validity {
        processed = mask_and(&processed, validity)?;
    }
    let boxes = connected_components(&processed)
        .into_iter()
        .filter(|c| c.area >= params.min_blob_area)
        .map(|c| c.bbox)
        .collect();
    Ok((processed, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::iou;

    /// Static textured background with an optional bright square at `sq`.
    fn scene(index: u64, sq: Option<(u32, u32)>) -> Frame {
        let (w, h) = (96u32, 72u32);
        let mut px = vec![0u8; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let v = 60.0
                    + 40.0 * ((x as f64 / 17.0).sin() * (y as f64 / 13.0).cos())
                    + 20.0 * ((x as f64 / 5.0 + y as f64 / 7.0).sin());
                px[(y * w + x) as usize] = v as u8;
            }
        }
        if let Some((sx, sy)) = sq {
            for y in sy..sy + 8 {
                for x in sx..sx + 8 {
                    px[(y * w + x) as usize] = 255;
                }
            }
        }
        Frame::new(w, h, index, px)
    }

    #[test]
    fn identical_frames_yield_no_candidates() {
        let params = MfeParams::default();
        for fusion in [FusionMode::TwoFrame, FusionMode::ThreeFrameAnd, FusionMode::ThreeFrameOr] {
            let p = MfeParams { fusion, ..params };
            let out = enhance(
                &scene(0, None),
                &scene(1, None),
                &scene(2, None),
                &Homography::identity(),
                &Homography::identity(),
                &p,
            )
            .unwrap();
            assert!(out.boxes.is_empty());
            assert_eq!(out.mask.count_set(), 0);
        }
    }

    #[test]
    fn moving_square_produces_overlapping_candidate() {
        let prev = scene(0, Some((36, 30)));
        let cur = scene(1, Some((40, 30)));
        let next = scene(2, Some((44, 30)));
        let out = enhance(
            &prev,
            &cur,
            &next,
            &Homography::identity(),
            &Homography::identity(),
            &MfeParams::default(),
        )
        .unwrap();
        assert_eq!(out.boxes.len(), 1, "boxes: {:?}", out.boxes);
        let truth = BoundingBox::new(40.0, 30.0, 8.0, 8.0);
        assert!(iou(&out.boxes[0], &truth) >= 0.25);
    }

    #[test]
    fn or_fusion_keeps_single_pair_motion_and_loses_it_under_and() {
        // The square moves between prev and cur only; cur and next agree.
        let prev = scene(0, Some((30, 30)));
        let cur = scene(1, Some((42, 30)));
        let next = scene(2, Some((42, 30)));
        let run = |fusion| {
            enhance(
                &prev,
                &cur,
                &next,
                &Homography::identity(),
                &Homography::identity(),
                &MfeParams { fusion, ..Default::default() },
            )
            .unwrap()
        };
        assert!(!run(FusionMode::ThreeFrameOr).boxes.is_empty());
        assert!(run(FusionMode::ThreeFrameAnd).boxes.is_empty());
    }

    #[test]
    fn or_is_superset_and_is_subset_of_pair_masks() {
        let prev = scene(0, Some((20, 20)));
        let cur = scene(1, Some((26, 24)));
        let next = scene(2, Some((32, 28)));
        let thr = 5;
        let d12 = binarize(&abs_diff(&cur, &prev).unwrap(), thr);
        let d23 = binarize(&abs_diff(&cur, &next).unwrap(), thr);
        let or = mask_or(&d12, &d23).unwrap();
        let and = mask_and(&d12, &d23).unwrap();
        for (i, (&o, &a)) in or.bits().iter().zip(and.bits()).enumerate() {
            assert!(!d12.bits()[i] || o, "OR must cover the prev-pair mask");
            assert!(!d23.bits()[i] || o);
            assert!(!a || d12.bits()[i], "AND must stay within the prev-pair mask");
            assert!(!a || d23.bits()[i]);
        }
    }

    #[test]
    fn candidates_avoid_warp_invalid_borders() {
        // A translating camera leaves an invalid stripe; a bright square
        // sitting there must not produce candidates.
        let mut prev = scene(0, None);
        let cur = scene(1, Some((1, 30)));
        let next = scene(2, Some((1, 30)));
        prev.index = 0;
        let shift = Homography::translation(6.0, 0.0);
        let out = enhance(&prev, &cur, &next, &shift, &shift, &MfeParams::default()).unwrap();
        for b in &out.boxes {
            assert!(b.x >= 6.0, "box {b:?} intersects the invalid stripe");
        }
        for y in 0..out.mask.height() {
            for x in 0..6 {
                assert!(!out.mask.get(x, y));
            }
        }
    }

    #[test]
    fn enhance_rejects_bad_indices() {
        let f = |i| scene(i, None);
        let id = Homography::identity();
        let params = MfeParams::default();
        assert!(enhance(&f(0), &f(1), &f(3), &id, &id, &params).is_err());
        assert!(enhance(&f(2), &f(1), &f(3), &id, &id, &params).is_err());
    }

    #[test]
    fn post_process_empty_mask() {
        assert!(post_process(&BinaryMask::empty(16, 16), &MfeParams::default()).is_empty());
    }

    #[test]
    fn post_process_drops_isolated_pixel_keeps_blob() {
        let mut m = BinaryMask::empty(24, 24);
        m.set(2, 2, true);
        for y in 10..15 {
            for x in 10..15 {
                m.set(x, y, true);
            }
        }
        let boxes = post_process(&m, &MfeParams::default());
        assert_eq!(boxes.len(), 1);
        assert_eq!(boxes[0], BoundingBox::new(10.0, 10.0, 5.0, 5.0));
    }

    #[test]
    fn post_process_area_floor_is_strict() {
        // Two morphology-stable shapes: a 3x5 rectangle (area 15) and a
        // staircase union of two 3x3 squares (area 14).
        let mut m = BinaryMask::empty(32, 32);
        for y in 4..9 {
            for x in 4..7 {
                m.set(x, y, true);
            }
        }
        for y in 20..23 {
            for x in 20..23 {
                m.set(x, y, true);
            }
        }
        for y in 21..24 {
            for x in 21..24 {
                m.set(x, y, true);
            }
        }
        // Confirm the constructed areas survive morphology unchanged.
        let params = MfeParams::default();
        let processed = morph_close(&morph_open(&m, 1), 1);
        let areas: Vec<usize> =
            connected_components(&processed).iter().map(|c| c.area).collect();
        assert_eq!(areas, vec![15, 14]);

        let boxes = post_process(&m, &params);
        assert_eq!(boxes.len(), 1, "only the 15-pixel blob survives");
        assert_eq!(boxes[0], BoundingBox::new(4.0, 4.0, 3.0, 5.0));
    }

    #[test]
    fn enhance_is_deterministic() {
        let prev = scene(0, Some((36, 30)));
        let cur = scene(1, Some((40, 30)));
        let next = scene(2, Some((44, 30)));
        let run = || {
            enhance(
                &prev,
                &cur,
                &next,
                &Homography::translation(0.25, -0.1),
                &Homography::translation(-0.3, 0.2),
                &MfeParams::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.boxes, b.boxes);
    }
}
