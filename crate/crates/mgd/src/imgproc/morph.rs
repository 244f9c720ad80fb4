//! Binary morphology with a 3×3 rectangular structuring element, applied as
//! separable horizontal and vertical passes. Pixels outside the image are
//! treated as background.

use super::BinaryMask;
use crate::par;

fn any_set(row: &[bool]) -> bool {
    row.iter().fold(false, |a, &b| a | b)
}

fn horizontal_and(src: &[bool], out: &mut [bool]) {
    for (o, win) in out[1..].iter_mut().zip(src.windows(3)) {
        *o = win[0] & win[1] & win[2];
    }
}

fn horizontal_or(src: &[bool], w: usize, out: &mut [bool]) {
    out[0] = src[0] | src[1.min(w - 1)];
    out[w - 1] = src[w - 1] | src[w.saturating_sub(2)];
    for (o, win) in out[1..].iter_mut().zip(src.windows(3)) {
        *o = win[0] | win[1] | win[2];
    }
}

/// A pixel survives erosion only if its full 3×3 neighborhood is foreground.
pub fn erode(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let src = m.bits();
    let mut rows = vec![false; w * h];
    par::fill_rows(&mut rows, w, |y, row| {
        horizontal_and(&src[y * w..(y + 1) * w], w, row);
    });
    let mut bits = vec![false; w * h];
    par::fill_rows(&mut bits, w, |y, out| {
        if y == 0 || y == h - 1 {
            return; // border rows touch the outside, which is background
        }
        let above = &rows[(y - 1) * w..y * w];
        let here = &rows[y * w..(y + 1) * w];
        let below = &rows[(y + 1) * w..(y + 2) * w];
        for x in 0..w {
            out[x] = above[x] & here[x] & below[x];
        }
    });
    BinaryMask::new(m.width(), m.height(), bits)
}

/// A pixel is set after dilation if any pixel of its 3×3 neighborhood is set.
pub fn dilate(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let src = m.bits();
    let mut rows = vec![false; w * h];
    par::fill_rows(&mut rows, w, |y, row| {
        horizontal_or(&src[y * w..(y + 1) * w], w, row);
    });
    let mut bits = vec![false; w * h];
    par::fill_rows(&mut bits, w, |y, out| {
        let y0 = y.saturating_sub(1);
        let y1 = (y + 1).min(h - 1);
        let above = &rows[y0 * w..y0 * w + w];
        let here = &rows[y * w..(y + 1) * w];
        let below = &rows[y1 * w..y1 * w + w];
        for x in 0..w {
            out[x] = above[x] | here[x] | below[x];
        }
    });
    BinaryMask::new(m.width(), m.height(), bits)
}

/// Opening: `iterations` erosions followed by the same number of dilations.
pub fn morph_open(m: &BinaryMask, iterations: usize) -> BinaryMask {
    assert!(iterations >= 1);
    let mut out = m.clone();
    for _ in 0..iterations {
        out = erode(&out);
    }
    for _ in 0..iterations {
        out = dilate(&out);
    }
    out
}

/// Closing: `iterations` dilations followed by the same number of erosions.
pub fn morph_close(m: &BinaryMask, iterations: usize) -> BinaryMask {
    assert!(iterations >= 1);
    let mut out = m.clone();
    for _ in 0..iterations {
        out = dilate(&out);
    }
    for _ in 0..iterations {
        out = erode(&out);
    }
    out
}
