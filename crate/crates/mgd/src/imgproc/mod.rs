//! Pixel-level primitives over single-channel 8-bit images: differencing,
//! binarization, morphology, connected components, cropping and resizing.

mod components;
mod morph;

pub use components::{connected_components, Component};
pub use morph::{dilate, erode, morph_close, morph_open};

use crate::par;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("invalid dimensions {0}x{1}")]
    InvalidDimensions(u32, u32),
    #[error("box ({0}, {1}, {2}, {3}) out of bounds for {4}x{5} image")]
    BoxOutOfBounds(i64, i64, i64, i64, u32, u32),
}

/// Single-channel intensity image with a stream position.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    /// 0-based ordinal of the frame within its sequence.
    pub index: u64,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Frame({}x{} #{})", self.width, self.height, self.index)
    }
}

impl Frame {
    /// Build a frame from row-major pixels. Panics unless
    /// `pixels.len() == width * height` and both dimensions are positive.
    pub fn new(width: u32, height: u32, index: u64, pixels: Vec<u8>) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize,
            "pixel count must equal width * height"
        );
        Self { width, height, index, pixels }
    }

    pub fn filled(width: u32, height: u32, index: u64, value: u8) -> Self {
        Self::new(width, height, index, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        &self.pixels[y as usize * w..(y as usize + 1) * w]
    }

    fn same_size(&self, other: &Frame) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Bilinear sample at subpixel coordinates, where pixel (i, j) sits at
    /// coordinate (i, j). Coordinates are clamped to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as u32;
        let y0 = y.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        (p00 * (1.0 - fx) + p10 * fx) * (1.0 - fy) + (p01 * (1.0 - fx) + p11 * fx) * fy
    }
}

/// Row-major boolean foreground mask with the dimensions of its source frame.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count_set()
        )
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        assert_eq!(bits.len(), width as usize * height as usize);
        Self { width, height, bits }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn filled(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![true; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn same_size(&self, other: &BinaryMask) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box in image coordinates. `x`/`y` is the top-left corner.
///
/// Coordinates are continuous: a box covering exactly pixel column 0..10 has
/// `x = 0, w = 10`. Boxes emitted by the pipeline have `w, h >= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Smallest box containing both operands.
    pub fn union_bounds(&self, other: &BoundingBox) -> BoundingBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        let r = self.right().max(other.right());
        let b = self.bottom().max(other.bottom());
        BoundingBox::new(x, y, r - x, b - y)
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let r = self.right().min(other.right());
        let b = self.bottom().min(other.bottom());
        if r > x && b > y {
            Some(BoundingBox::new(x, y, r - x, b - y))
        } else {
            None
        }
    }
}

/// Per-pixel absolute difference. The output keeps `a`'s index.
pub fn abs_diff(a: &Frame, b: &Frame) -> Result<Frame, ImageError> {
    a.same_size(b)?;
    let w = a.width as usize;
    let mut pixels = vec![0u8; a.pixels.len()];
    par::fill_rows(&mut pixels, w, |y, row| {
        let ra = &a.pixels[y * w..(y + 1) * w];
        let rb = &b.pixels[y * w..(y + 1) * w];
        for (out, (&pa, &pb)) in row.iter_mut().zip(ra.iter().zip(rb)) {
            *out = pa.abs_diff(pb);
        }
    });
    Ok(Frame::new(a.width, a.height, a.index, pixels))
}

/// Foreground where `pixel >= threshold` (inclusive).
pub fn binarize(d: &Frame, threshold: u8) -> BinaryMask {
    let w = d.width as usize;
    let mut bits = vec![false; d.pixels.len()];
    par::fill_rows(&mut bits, w, |y, row| {
        let src = &d.pixels[y * w..(y + 1) * w];
        for (out, &p) in row.iter_mut().zip(src) {
            *out = p >= threshold;
        }
    });
    BinaryMask::new(d.width, d.height, bits)
}

/// Per-pixel logical union.
pub fn mask_or(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask, ImageError> {
    a.same_size(b)?;
    let w = a.width as usize;
    let mut bits = vec![false; a.bits.len()];
    par::fill_rows(&mut bits, w, |y, row| {
        let ra = &a.bits[y * w..(y + 1) * w];
        let rb = &b.bits[y * w..(y + 1) * w];
        for (out, (&pa, &pb)) in row.iter_mut().zip(ra.iter().zip(rb)) {
            *out = pa || pb;
        }
    });
    Ok(BinaryMask::new(a.width, a.height, bits))
}

/// Per-pixel logical intersection.
pub fn mask_and(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask, ImageError> {
    a.same_size(b)?;
    let w = a.width as usize;
    let mut bits = vec![false; a.bits.len()];
    par::fill_rows(&mut bits, w, |y, row| {
        let ra = &a.bits[y * w..(y + 1) * w];
        let rb = &b.bits[y * w..(y + 1) * w];
        for (out, (&pa, &pb)) in row.iter_mut().zip(ra.iter().zip(rb)) {
            *out = pa && pb;
        }
    });
    Ok(BinaryMask::new(a.width, a.height, bits))
}

/// Extract the pixels under `bx`. Box coordinates are rounded to the pixel
/// grid and must stay inside the frame.
pub fn crop(f: &Frame, bx: &BoundingBox) -> Result<Frame, ImageError> {
    let x0 = bx.x.round() as i64;
    let y0 = bx.y.round() as i64;
    let w = bx.w.round() as i64;
    let h = bx.h.round() as i64;
    if w < 1 || h < 1 || x0 < 0 || y0 < 0 || x0 + w > f.width as i64 || y0 + h > f.height as i64 {
        return Err(ImageError::BoxOutOfBounds(x0, y0, w, h, f.width, f.height));
    }
    let (x0, y0, w, h) = (x0 as usize, y0 as usize, w as usize, h as usize);
    let src_w = f.width as usize;
    let mut pixels = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        pixels.extend_from_slice(&f.pixels[y * src_w + x0..y * src_w + x0 + w]);
    }
    Ok(Frame::new(w as u32, h as u32, f.index, pixels))
}

/// Square window of side `size` around `center`, shifted as needed to stay
/// inside the frame. Returns the window and its top-left offset in the source
/// image, so detections inside the window map back to full-image coordinates.
/// `size` is clamped to the frame dimensions.
pub fn crop_clamped(f: &Frame, center: (f64, f64), size: u32) -> (Frame, (u32, u32)) {
    let w = size.min(f.width);
    let h = size.min(f.height);
    let x0 = (center.0.round() as i64 - w as i64 / 2).clamp(0, (f.width - w) as i64) as u32;
    let y0 = (center.1.round() as i64 - h as i64 / 2).clamp(0, (f.height - h) as i64) as u32;
    let bx = BoundingBox::new(x0 as f64, y0 as f64, w as f64, h as f64);
    let window = crop(f, &bx).expect("clamped window is in bounds");
    (window, (x0, y0))
}

/// Bilinear resize with half-pixel center alignment.
pub fn resize_bilinear(f: &Frame, out_w: u32, out_h: u32) -> Frame {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    if out_w == f.width && out_h == f.height {
        return f.clone();
    }
    let sx = f.width as f64 / out_w as f64;
    let sy = f.height as f64 / out_h as f64;
    let mut pixels = vec![0u8; out_w as usize * out_h as usize];
    par::fill_rows(&mut pixels, out_w as usize, |y, row| {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for (x, out) in row.iter_mut().enumerate() {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            *out = f.sample_bilinear(src_x, src_y).round() as u8;
        }
    });
    Frame::new(out_w, out_h, f.index, pixels)
}

/// Rec.601 luma from 8-bit RGB, rounded to nearest.
pub fn luma_rec601(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_from(w: u32, h: u32, vals: &[u8]) -> Frame {
        Frame::new(w, h, 0, vals.to_vec())
    }

    #[test]
    fn abs_diff_identity_is_zero() {
        let f = frame_from(4, 3, &[7; 12]);
        let d = abs_diff(&f, &f).unwrap();
        assert!(d.pixels().iter().all(|&p| p == 0));
        assert_eq!(d.index, f.index);
    }

    #[test]
    fn abs_diff_constants() {
        let a = Frame::filled(5, 5, 3, 10);
        let b = Frame::filled(5, 5, 4, 3);
        let d = abs_diff(&a, &b).unwrap();
        assert!(d.pixels().iter().all(|&p| p == 7));
        assert_eq!(d.index, 3);
    }

    #[test]
    fn abs_diff_matches_scalar_reference() {
        // Scalar reference loop over a deterministic pseudo-random 8x8 pair.
        let mut state = 0x12345u32;
        let mut next = || {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            (state >> 24) as u8
        };
        let a: Vec<u8> = (0..64).map(|_| next()).collect();
        let b: Vec<u8> = (0..64).map(|_| next()).collect();
        let fa = frame_from(8, 8, &a);
        let fb = frame_from(8, 8, &b);
        let d = abs_diff(&fa, &fb).unwrap();
        for i in 0..64 {
            let expect = (a[i] as i16 - b[i] as i16).unsigned_abs() as u8;
            assert_eq!(d.pixels()[i], expect);
        }
    }

    #[test]
    fn abs_diff_rejects_dimension_mismatch() {
        let a = Frame::filled(4, 4, 0, 0);
        let b = Frame::filled(4, 5, 0, 0);
        assert!(matches!(abs_diff(&a, &b), Err(ImageError::DimensionMismatch(..))));
    }

    #[test]
    fn binarize_threshold_is_inclusive() {
        let mut f = Frame::filled(3, 3, 0, 0);
        let m = binarize(&f, 5);
        assert_eq!(m.count_set(), 0);

        f = Frame::filled(3, 3, 0, 0);
        let mut px = f.pixels().to_vec();
        px[4] = 10;
        let m = binarize(&frame_from(3, 3, &px), 5);
        assert_eq!(m.count_set(), 1);
        assert!(m.get(1, 1));

        px[4] = 5;
        let m = binarize(&frame_from(3, 3, &px), 5);
        assert!(m.get(1, 1), "value equal to threshold is foreground");
    }

    #[test]
    fn mask_or_and_basics() {
        let mut a = BinaryMask::empty(4, 4);
        a.set(2, 1, true);
        let b = BinaryMask::empty(4, 4);
        assert!(mask_or(&a, &b).unwrap().get(2, 1));
        assert_eq!(mask_and(&a, &b).unwrap().count_set(), 0);
        // Idempotence.
        assert_eq!(mask_or(&a, &a).unwrap(), a);
        assert_eq!(mask_and(&a, &a).unwrap(), a);
    }

    #[test]
    fn mask_ops_match_truth_table_reference() {
        let mut state = 99u32;
        let mut next = || {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            state & 1 == 1
        };
        let a_bits: Vec<bool> = (0..256).map(|_| next()).collect();
        let b_bits: Vec<bool> = (0..256).map(|_| next()).collect();
        let a = BinaryMask::new(16, 16, a_bits.clone());
        let b = BinaryMask::new(16, 16, b_bits.clone());
        let or = mask_or(&a, &b).unwrap();
        let and = mask_and(&a, &b).unwrap();
        for i in 0..256 {
            assert_eq!(or.bits()[i], a_bits[i] | b_bits[i]);
            assert_eq!(and.bits()[i], a_bits[i] & b_bits[i]);
        }
    }

    #[test]
    fn crop_whole_image_is_identity() {
        let f = frame_from(4, 3, &(0..12).collect::<Vec<u8>>());
        let c = crop(&f, &BoundingBox::new(0.0, 0.0, 4.0, 3.0)).unwrap();
        assert_eq!(c, f);
    }

    #[test]
    fn crop_out_of_bounds_rejected() {
        let f = Frame::filled(4, 4, 0, 0);
        assert!(crop(&f, &BoundingBox::new(2.0, 2.0, 4.0, 2.0)).is_err());
        assert!(crop(&f, &BoundingBox::new(-1.0, 0.0, 2.0, 2.0)).is_err());
    }

    #[test]
    fn crop_clamped_at_corner() {
        let f = Frame::filled(1920, 1080, 0, 0);
        let (win, off) = crop_clamped(&f, (0.0, 0.0), 320);
        assert_eq!((win.width(), win.height()), (320, 320));
        assert_eq!(off, (0, 0));
    }

    #[test]
    fn crop_clamped_near_right_edge() {
        let f = Frame::filled(1920, 1080, 0, 0);
        let (_, off) = crop_clamped(&f, (1900.0, 540.0), 320);
        assert_eq!(off.0, 1600);
        assert_eq!(off.1, 380);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let f = frame_from(4, 3, &(0..12).collect::<Vec<u8>>());
        assert_eq!(resize_bilinear(&f, 4, 3), f);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let f = Frame::filled(7, 5, 0, 42);
        let r = resize_bilinear(&f, 32, 32);
        assert!(r.pixels().iter().all(|&p| p == 42));
    }

    #[test]
    fn resize_half_pixel_centers_hand_case() {
        // Rows [0,100] twice. Down to 2x1: output y samples at src y=0.5, the
        // midpoint of two equal rows; x maps 1:1. Hand evaluation gives
        // [0, 100]. Down to 1x2 instead averages the columns: [50, 50].
        let f = frame_from(2, 2, &[0, 100, 0, 100]);
        let r = resize_bilinear(&f, 2, 1);
        assert_eq!(r.pixels(), &[0, 100]);
        let r = resize_bilinear(&f, 1, 2);
        assert_eq!(r.pixels(), &[50, 50]);
    }

    #[test]
    fn resize_stays_within_input_range() {
        let mut state = 7u32;
        let mut next = || {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            (state >> 24) as u8
        };
        let vals: Vec<u8> = (0..15 * 11).map(|_| next()).collect();
        let lo = *vals.iter().min().unwrap();
        let hi = *vals.iter().max().unwrap();
        let f = frame_from(15, 11, &vals);
        for (w, h) in [(3, 3), (40, 2), (7, 31)] {
            let r = resize_bilinear(&f, w, h);
            assert!(r.pixels().iter().all(|&p| p >= lo && p <= hi));
        }
    }

    #[test]
    fn luma_rec601_weights() {
        assert_eq!(luma_rec601(255, 255, 255), 255);
        assert_eq!(luma_rec601(0, 0, 0), 0);
        assert_eq!(luma_rec601(255, 0, 0), 76); // 0.299 * 255 = 76.245
    }
}
