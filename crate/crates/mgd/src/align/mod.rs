//! Frame-to-frame alignment: uniform keypoint grids, pyramidal Lucas-Kanade
//! tracking, RANSAC homography estimation, perspective warping and homography
//! algebra.

mod lk;
mod pyramid;
mod ransac;

pub use lk::{lk_track, lk_track_pyramids, LkParams};
pub use pyramid::Pyramid;
pub use ransac::{estimate_homography, RansacParams};

use crate::imgproc::{BinaryMask, BoundingBox, Frame};
use crate::par;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("grid of {cols}x{rows} does not fit a {width}x{height} image")]
    DegenerateGrid { width: u32, height: u32, cols: u32, rows: u32 },
    #[error("matrix is singular or near-singular")]
    Singular,
    #[error("need at least 4 tracked matches, got {0}")]
    TooFewMatches(usize),
    #[error("no homography with at least 4 inliers found")]
    EstimationFailed,
}

/// Subpixel image coordinate. Pixel (i, j) is centered at (i, j).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A keypoint correspondence produced by tracking.
#[derive(Clone, Copy, Debug)]
pub struct PointMatch {
    pub src: Point,
    pub dst: Point,
    pub tracked: bool,
}

/// Determinants below this are treated as singular.
const DET_FLOOR: f64 = 1e-10;

/// 3×3 projective transform, normalized so `m[(2,2)] == 1` whenever that
/// entry is nonzero. Always invertible by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    /// Wrap a matrix, renormalizing the scale. Rejects near-singular input.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, AlignError> {
        if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() < DET_FLOOR {
            return Err(AlignError::Singular);
        }
        let mut m = m;
        let w = m[(2, 2)];
        if w.abs() > DET_FLOOR {
            m /= w;
        }
        Ok(Self { m })
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        let mut m = Matrix3::identity();
        m[(0, 2)] = dx;
        m[(1, 2)] = dy;
        Self { m }
    }

    /// Rotation by `radians` about `center`, with optional isotropic `scale`.
    pub fn rotation_about(center: (f64, f64), radians: f64, scale: f64) -> Self {
        let (s, c) = radians.sin_cos();
        let (cx, cy) = center;
        let m = Matrix3::new(
            scale * c,
            -scale * s,
            cx - scale * (c * cx - s * cy),
            scale * s,
            scale * c,
            cy - scale * (s * cx + c * cy),
            0.0,
            0.0,
            1.0,
        );
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Apply the transform with perspective division.
    pub fn apply(&self, p: Point) -> Point {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        Point::new(v.x / v.z, v.y / v.z)
    }

    /// `a.compose(&b)` maps points by `b` first, then `a` (matrix product).
    pub fn compose(&self, other: &Homography) -> Result<Homography, AlignError> {
        Homography::from_matrix(self.m * other.m)
    }

    pub fn inverse(&self) -> Result<Homography, AlignError> {
        let inv = self.m.try_inverse().ok_or(AlignError::Singular)?;
        Homography::from_matrix(inv)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.m - Matrix3::identity()).amax() <= tol
    }
}

/// Centers of a uniform `cols`×`rows` cell grid over the image, row-major.
/// Centers are clamped to valid pixel coordinates.
pub fn sample_grid(width: u32, height: u32, cols: u32, rows: u32) -> Result<Vec<Point>, AlignError> {
    if cols < 2 || rows < 2 || width < cols || height < rows {
        return Err(AlignError::DegenerateGrid { width, height, cols, rows });
    }
    let cw = width as f64 / cols as f64;
    let ch = height as f64 / rows as f64;
    let mut pts = Vec::with_capacity(cols as usize * rows as usize);
    for r in 0..rows {
        let y = ((r as f64 + 0.5) * ch).min((height - 1) as f64);
        for c in 0..cols {
            let x = ((c as f64 + 0.5) * cw).min((width - 1) as f64);
            pts.push(Point::new(x, y));
        }
    }
    Ok(pts)
}

/// Map the four corners of `bx` through `h` and return the axis-aligned box
/// of the mapped corners.
pub fn transform_box(h: &Homography, bx: &BoundingBox) -> BoundingBox {
    let corners = [
        Point::new(bx.x, bx.y),
        Point::new(bx.right(), bx.y),
        Point::new(bx.x, bx.bottom()),
        Point::new(bx.right(), bx.bottom()),
    ];
    let mapped = corners.map(|c| h.apply(c));
    let min_x = mapped.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = mapped.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = mapped.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = mapped.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    BoundingBox::new(min_x, min_y, max_x - min_x, max_y - min_y)
}

/// A warped frame plus the mask of pixels that mapped inside the source.
#[derive(Clone, Debug)]
pub struct Warped {
    pub frame: Frame,
    pub validity: BinaryMask,
}

/// Resample `f` so that output pixel `p` shows the source at `h⁻¹·p`
/// (bilinear). Pixels mapping outside the source are 0 and marked invalid.
pub fn warp_perspective(f: &Frame, h: &Homography) -> Result<Warped, AlignError> {
    let hinv = h.inverse()?;
    let m = *hinv.matrix();
    let (w, hgt) = (f.width() as usize, f.height() as usize);
    let max_x = (f.width() - 1) as f64;
    let max_y = (f.height() - 1) as f64;

    let mut pixels = vec![0u8; w * hgt];
    let mut valid = vec![false; w * hgt];
    let src = f.pixels();
    // One pass computes both planes; rows are independent.
    let mut rows: Vec<(&mut [u8], &mut [bool])> =
        pixels.chunks_mut(w).zip(valid.chunks_mut(w)).collect();
    par::fill_rows(&mut rows, 1, |y, row| {
        let (px_row, valid_row) = &mut row[0];
        let yf = y as f64;
        // Homogeneous source coordinate at (0, y) and its per-x increment.
        let qx0 = m[(0, 1)] * yf + m[(0, 2)];
        let qy0 = m[(1, 1)] * yf + m[(1, 2)];
        let qz0 = m[(2, 1)] * yf + m[(2, 2)];
        let (dx, dy, dz) = (m[(0, 0)], m[(1, 0)], m[(2, 0)]);

        // All validity conditions are linear in x once multiplied by qz
        // (which must stay positive): intersecting the half-planes gives the
        // valid x-interval for this row, so the inner loop is branch-free.
        let mut lo = 0f64;
        let mut hi = (w - 1) as f64;
        let mut restrict = |a: f64, b: f64| {
            // a + x*b >= 0
            if b.abs() < 1e-300 {
                if a < 0.0 {
                    hi = -1.0;
                }
            } else if b > 0.0 {
                lo = lo.max(-a / b);
            } else {
                hi = hi.min(-a / b);
            }
        };
        restrict(qz0 - 1e-9, dz); // qz >= 1e-9
        restrict(qx0, dx); // sx >= 0
        restrict(max_x * qz0 - qx0, max_x * dz - dx); // sx <= max_x
        restrict(qy0, dy); // sy >= 0
        restrict(max_y * qz0 - qy0, max_y * dz - dy); // sy <= max_y
        let x_lo = lo.ceil() as usize;
        let Some(x_hi) = (hi.floor() as i64).try_into().ok().filter(|&h: &usize| h >= x_lo && h < w)
        else {
            return;
        };

        let mut qx = qx0 + x_lo as f64 * dx;
        let mut qy = qy0 + x_lo as f64 * dy;
        let mut qz = qz0 + x_lo as f64 * dz;
        for x in x_lo..=x_hi {
            let iz = 1.0 / qz;
            let sx = qx * iz;
            let sy = qy * iz;
            let x0 = sx as usize;
            let y0 = sy as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(hgt - 1);
            let fx = (sx - x0 as f64) as f32;
            let fy = (sy - y0 as f64) as f32;
            let r0 = y0 * w;
            let r1 = y1 * w;
            let top = src[r0 + x0] as f32 + fx * (src[r0 + x1] as f32 - src[r0 + x0] as f32);
            let bot = src[r1 + x0] as f32 + fx * (src[r1 + x1] as f32 - src[r1 + x0] as f32);
            px_row[x] = (top + fy * (bot - top) + 0.5) as u8;
            qx += dx;
            qy += dy;
            qz += dz;
        }
        valid_row[x_lo..=x_hi].fill(true);
    });
    Ok(Warped {
        frame: Frame::new(f.width(), f.height(), f.index, pixels),
        validity: BinaryMask::new(f.width(), f.height(), valid),
    })
}
