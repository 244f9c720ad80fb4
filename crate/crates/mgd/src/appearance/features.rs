//! Fixed feature vector for the linear crop classifier: a 16-bin
//! gradient-magnitude histogram plus mean, variance, min and max intensity.

use crate::imgproc::Frame;

pub const FEATURE_COUNT: usize = 20;
const HIST_BINS: usize = 16;

/// Extract the 20-dimensional feature vector.
///
/// Gradients are central differences over interior pixels; magnitudes are
/// binned into 16 equal bins spanning [0, 256) and normalized by the
/// interior pixel count. Intensity statistics are raw 8-bit values, so
/// adding a constant to every pixel leaves the histogram untouched and
/// shifts the mean by exactly that constant.
pub fn extract_features(crop: &Frame) -> [f64; FEATURE_COUNT] {
    let (w, h) = (crop.width() as usize, crop.height() as usize);
    let px = crop.pixels();
    let mut out = [0.0; FEATURE_COUNT];

    if w >= 3 && h >= 3 {
        let mut hist = [0usize; HIST_BINS];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let gx = (px[y * w + x + 1] as f64 - px[y * w + x - 1] as f64) * 0.5;
                let gy = (px[(y + 1) * w + x] as f64 - px[(y - 1) * w + x] as f64) * 0.5;
                let mag = gx.hypot(gy);
                let bin = ((mag * HIST_BINS as f64 / 256.0) as usize).min(HIST_BINS - 1);
                hist[bin] += 1;
            }
        }
        let interior = ((w - 2) * (h - 2)) as f64;
        for (i, count) in hist.iter().enumerate() {
            out[i] = *count as f64 / interior;
        }
    }

    let n = (w * h) as f64;
    let sum: f64 = px.iter().map(|&p| p as f64).sum();
    let mean = sum / n;
    let var = px.iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / n;
    out[16] = mean;
    out[17] = var;
    out[18] = *px.iter().min().unwrap() as f64;
    out[19] = *px.iter().max().unwrap() as f64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn textured_crop() -> Frame {
        let mut px = vec![0u8; 32 * 32];
        for y in 0..32usize {
            for x in 0..32usize {
                px[y * 32 + x] = (40 + (x * 5 + y * 3) % 120) as u8;
            }
        }
        Frame::new(32, 32, 0, px)
    }

    #[test]
    fn histogram_sums_to_one() {
        let f = extract_features(&textured_crop());
        let total: f64 = f[..16].iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intensity_offset_shifts_mean_only() {
        let crop = textured_crop();
        let shifted = Frame::new(
            32,
            32,
            0,
            crop.pixels().iter().map(|&p| p + 60).collect(),
        );
        let a = extract_features(&crop);
        let b = extract_features(&shifted);
        for i in 0..16 {
            assert_eq!(a[i], b[i], "gradient bin {i} must be offset-invariant");
        }
        assert_abs_diff_eq!(b[16], a[16] + 60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b[17], a[17], epsilon = 1e-9);
        assert_eq!(b[18], a[18] + 60.0);
        assert_eq!(b[19], a[19] + 60.0);
    }

    #[test]
    fn flat_crop_has_all_mass_in_zero_bin() {
        let f = extract_features(&Frame::filled(32, 32, 0, 90));
        assert_eq!(f[0], 1.0);
        assert_eq!(f[16], 90.0);
        assert_eq!(f[17], 0.0);
    }
}
