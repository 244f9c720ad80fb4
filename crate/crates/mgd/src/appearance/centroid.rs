//! Blob-extraction detector baseline: threshold the deviation-from-median
//! image at an Otsu split and report each surviving blob as a detection.

use super::{BackendError, CropDetector, Detection, Stage};
use crate::imgproc::{connected_components, BinaryMask, Frame};

#[derive(Clone, Copy, Debug)]
pub struct CentroidDetector {
    /// Blobs below this pixel count are noise.
    pub min_blob_area: usize,
    /// Intensity contrast (blob mean vs. crop median) at which confidence
    /// saturates to 1.
    pub contrast_saturation: f64,
    /// Re-apply Otsu inside the foreground class while it still covers more
    /// than this fraction of the crop, so the split chases the outlier tail
    /// on textured crops instead of bisecting the background.
    pub max_foreground_fraction: f64,
}

impl Default for CentroidDetector {
    fn default() -> Self {
        Self { min_blob_area: 4, contrast_saturation: 64.0, max_foreground_fraction: 0.05 }
    }
}

/// Otsu threshold over `hist` restricted to values in `lo..=255`. Returns
/// the value t maximizing between-class variance for the split `< t` / `>= t`,
/// or None when only one class exists.
fn otsu(hist: &[u64; 256], lo: usize) -> Option<usize> {
    let total: u64 = hist[lo..].iter().sum();
    if total == 0 {
        return None;
    }
    let weighted_total: f64 = hist[lo..]
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + i) as f64 * c as f64)
        .sum();
    let mut best_t = None;
    let mut best_var = 0.0;
    let mut count_below = 0u64;
    let mut sum_below = 0.0;
    for t in lo + 1..=255 {
        count_below += hist[t - 1];
        sum_below += (t - 1) as f64 * hist[t - 1] as f64;
        let count_above = total - count_below;
        if count_below == 0 || count_above == 0 {
            continue;
        }
        let mean_below = sum_below / count_below as f64;
        let mean_above = (weighted_total - sum_below) / count_above as f64;
        let var = count_below as f64 * count_above as f64 * (mean_below - mean_above).powi(2);
        if var > best_var {
            best_var = var;
            best_t = Some(t);
        }
    }
    best_t
}

fn median(hist: &[u64; 256], total: u64) -> u8 {
    let mut seen = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        seen += c;
        if seen * 2 >= total {
            return v as u8;
        }
    }
    255
}

impl CropDetector for CentroidDetector {
    fn detect(&mut self, crop: &Frame) -> Result<Vec<Detection>, BackendError> {
        let px = crop.pixels();
        let mut hist = [0u64; 256];
        for &p in px {
            hist[p as usize] += 1;
        }
        let lo = px.iter().min().copied().unwrap_or(0);
        let hi = px.iter().max().copied().unwrap_or(0);
        if lo == hi {
            return Ok(Vec::new()); // flat crop
        }
        let med = median(&hist, px.len() as u64);

        let residual: Vec<u8> = px.iter().map(|&p| p.abs_diff(med)).collect();
        let mut res_hist = [0u64; 256];
        for &r in &residual {
            res_hist[r as usize] += 1;
        }

        // Otsu split, re-applied within the foreground while it stays too
        // occupied. Residual 0 is never foreground.
        let total = residual.len() as f64;
        let mut threshold = 1usize;
        loop {
            let Some(t) = otsu(&res_hist, threshold) else { break };
            if t <= threshold {
                break;
            }
            threshold = t;
            let fg: u64 = res_hist[threshold..].iter().sum();
            if (fg as f64) / total <= self.max_foreground_fraction {
                break;
            }
        }
        if threshold <= 1 && res_hist[1..].iter().sum::<u64>() == residual.len() as u64 {
            // Degenerate: everything deviates; nothing to segment.
            return Ok(Vec::new());
        }

        let bits: Vec<bool> = residual.iter().map(|&r| (r as usize) >= threshold).collect();
        let mask = BinaryMask::new(crop.width(), crop.height(), bits);
        let mut out = Vec::new();
        for comp in connected_components(&mask) {
            if comp.area < self.min_blob_area {
                continue;
            }
            // Mean raw intensity inside the blob's box foreground.
            let x0 = comp.bbox.x as u32;
            let y0 = comp.bbox.y as u32;
            let mut sum = 0.0;
            let mut count = 0usize;
            for y in y0..y0 + comp.bbox.h as u32 {
                for x in x0..x0 + comp.bbox.w as u32 {
                    if mask.get(x, y) {
                        sum += crop.get(x, y) as f64;
                        count += 1;
                    }
                }
            }
            let contrast = (sum / count as f64 - med as f64).abs();
            let confidence = (contrast / self.contrast_saturation).min(1.0);
            out.push(Detection { bbox: comp.bbox, confidence, stage: Stage::Refined });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::BoundingBox;

    #[test]
    fn flat_crop_yields_nothing() {
        let crop = Frame::filled(64, 64, 0, 123);
        assert!(CentroidDetector::default().detect(&crop).unwrap().is_empty());
    }

    #[test]
    fn clean_bright_blob_gets_exact_box_and_high_confidence() {
        let mut px = vec![30u8; 64 * 64];
        for y in 20..28usize {
            for x in 40..48usize {
                px[y * 64 + x] = 250;
            }
        }
        let crop = Frame::new(64, 64, 0, px);
        let dets = CentroidDetector::default().detect(&crop).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::new(40.0, 20.0, 8.0, 8.0));
        assert_eq!(dets[0].confidence, 1.0); // contrast 220 saturates
    }

    #[test]
    fn dark_blob_on_bright_background_detected() {
        let mut px = vec![200u8; 48 * 48];
        for y in 10..16usize {
            for x in 10..16usize {
                px[y * 48 + x] = 20;
            }
        }
        let crop = Frame::new(48, 48, 0, px);
        let dets = CentroidDetector::default().detect(&crop).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::new(10.0, 10.0, 6.0, 6.0));
    }

    #[test]
    fn finds_small_target_on_textured_background() {
        // Value-noise-like texture plus one bright 8x8 square.
        let (w, h) = (160u32, 160u32);
        let mut px = vec![0u8; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let v = 120.0
                    + 28.0 * ((x as f64 / 19.0).sin() * (y as f64 / 23.0).cos())
                    + 14.0 * ((x as f64 / 7.0 + y as f64 / 9.0).sin());
                px[(y * w + x) as usize] = v as u8;
            }
        }
        for y in 70..78u32 {
            for x in 90..98u32 {
                px[(y * w + x) as usize] = 245;
            }
        }
        let crop = Frame::new(w, h, 0, px);
        let dets = CentroidDetector::default().detect(&crop).unwrap();
        let strong: Vec<&Detection> = dets.iter().filter(|d| d.confidence > 0.5).collect();
        assert_eq!(strong.len(), 1, "dets: {dets:?}");
        let b = strong[0].bbox;
        assert!(b.x >= 88.0 && b.right() <= 100.0 && b.y >= 68.0 && b.bottom() <= 80.0);
        assert!(b.w >= 6.0 && b.h >= 6.0);
    }

    #[test]
    fn dbg_synth_frame() {
        use crate::synth::*;
        let cfg = SynthConfig {
            width: 256, height: 192, length: 3,
            camera: CameraPath { dx: 1.5, dy: 0.0, rot_deg: 0.0, zoom: 1.0 },
            background: Default::default(),
            targets: vec![TargetSpec { size: 8, speed: 3.0, path: TargetPath::Linear, contrast: 0.9,
                start: (60.0, 90.0), direction: (1.0, 0.2), amplitude: 0.0, period: 24.0 }],
            distractors: vec![],
        };
        let (frames, gt, _) = synth_generate(&cfg, 5);
        let dets = CentroidDetector::default().detect(&frames[1]).unwrap();
        eprintln!("gt: {:?}", gt.boxes(1));
        eprintln!("dets ({}):", dets.len());
        for d in dets.iter().take(12) { eprintln!("  {:?} conf {:.3}", d.bbox, d.confidence); }
        // histogram stats
        let px = frames[1].pixels();
        let mn = px.iter().min().unwrap(); let mx = px.iter().max().unwrap();
        eprintln!("min {} max {}", mn, mx);
    }
}
