//! Iterative pyramidal Lucas-Kanade point tracking.

use super::pyramid::{Level, Pyramid};
use super::{Point, PointMatch};
use crate::imgproc::Frame;
use crate::par;

#[derive(Clone, Copy, Debug)]
pub struct LkParams {
    /// Pyramid depth including the base level.
    pub levels: usize,
    /// Square window side, odd.
    pub window: usize,
    /// Iteration cap per pyramid level.
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration update, in pixels.
    pub epsilon: f64,
    /// Reject windows whose gradient matrix has a smaller per-pixel minimum
    /// eigenvalue than this.
    pub min_eigenvalue: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self { levels: 3, window: 21, max_iters: 30, epsilon: 0.01, min_eigenvalue: 1e-4 }
    }
}

/// Track `points` from `prev` into `cur`. Failures are reported per point via
/// `tracked = false`; the output is index-aligned with the input.
pub fn lk_track(prev: &Frame, cur: &Frame, points: &[Point], params: &LkParams) -> Vec<PointMatch> {
    let prev_pyr = Pyramid::build(prev, params.levels);
    let cur_pyr = Pyramid::build(cur, params.levels);
    lk_track_pyramids(&prev_pyr, &cur_pyr, points, params)
}

/// As [`lk_track`], reusing prebuilt pyramids.
pub fn lk_track_pyramids(
    prev: &Pyramid,
    cur: &Pyramid,
    points: &[Point],
    params: &LkParams,
) -> Vec<PointMatch> {
    assert!(params.window % 2 == 1 && params.window >= 3, "window must be odd and >= 3");
    par::map_slice(points, |&p| {
        let mut scratch = Scratch::new(params.window);
        track_one(prev, cur, p, params, &mut scratch)
    })
}

struct Window {
    lo_x: i64,
    hi_x: i64,
    lo_y: i64,
    hi_y: i64,
}

impl Window {
    fn width(&self) -> usize {
        (self.hi_x - self.lo_x + 1) as usize
    }
    fn height(&self) -> usize {
        (self.hi_y - self.lo_y + 1) as usize
    }
}

struct Scratch {
    /// Window snapshot with a one-pixel apron for gradients.
    padded: Vec<f32>,
    grad_x: Vec<f32>,
    grad_y: Vec<f32>,
    template: Vec<f32>,
    moved: Vec<f32>,
}

impl Scratch {
    fn new(window: usize) -> Self {
        let n = window + 2;
        Self {
            padded: vec![0.0; n * n],
            grad_x: vec![0.0; window * window],
            grad_y: vec![0.0; window * window],
            template: vec![0.0; window * window],
            moved: vec![0.0; window * window],
        }
    }
}

/// Offsets around `u` that keep `u + offset` at least `margin` pixels inside
/// the level. Returns None when no usable window remains.
fn clamp_window(level: &Level, u: Point, radius: i64, margin: f64) -> Option<Window> {
    let lo_x = (-radius).max((margin - u.x).ceil() as i64);
    let hi_x = radius.min((level.width as f64 - 1.0 - margin - u.x).floor() as i64);
    let lo_y = (-radius).max((margin - u.y).ceil() as i64);
    let hi_y = radius.min((level.height as f64 - 1.0 - margin - u.y).floor() as i64);
    if hi_x - lo_x < 2 || hi_y - lo_y < 2 {
        return None;
    }
    Some(Window { lo_x, hi_x, lo_y, hi_y })
}

/// Sample a `w`x`h` grid of bilinear taps whose top-left tap sits at
/// `(x0, y0)`. All taps share one fractional offset, so each output row is a
/// weighted sum of two contiguous input rows. Taps outside the level
/// replicate the edge.
fn sample_window(level: &Level, x0: f64, y0: f64, w: usize, h: usize, out: &mut [f32]) {
    let max_ix = level.width - 1;
    let max_iy = level.height - 1;
    let fx = x0.floor();
    let fy = y0.floor();
    let wx = (x0 - fx) as f32;
    let wy = (y0 - fy) as f32;
    let w00 = (1.0 - wx) * (1.0 - wy);
    let w10 = wx * (1.0 - wy);
    let w01 = (1.0 - wx) * wy;
    let w11 = wx * wy;
    let ix = fx as i64;
    let iy = fy as i64;

    let clamp_x = |x: i64| x.clamp(0, max_ix as i64) as usize;
    let clamp_y = |y: i64| y.clamp(0, max_iy as i64) as usize;
    let interior_x = ix >= 0 && (ix + w as i64) < max_ix as i64;

    for row in 0..h {
        let y_lo = clamp_y(iy + row as i64);
        let y_hi = clamp_y(iy + row as i64 + 1);
        let r0 = &level.data[y_lo * level.width..y_lo * level.width + level.width];
        let r1 = &level.data[y_hi * level.width..y_hi * level.width + level.width];
        let dst = &mut out[row * w..(row + 1) * w];
        if interior_x {
            let x = ix as usize;
            let a0 = &r0[x..x + w + 1];
            let a1 = &r1[x..x + w + 1];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = w00 * a0[i] + w10 * a0[i + 1] + w01 * a1[i] + w11 * a1[i + 1];
            }
        } else {
            for (i, d) in dst.iter_mut().enumerate() {
                let x_lo = clamp_x(ix + i as i64);
                let x_hi = clamp_x(ix + i as i64 + 1);
                *d = w00 * r0[x_lo] + w10 * r0[x_hi] + w01 * r1[x_lo] + w11 * r1[x_hi];
            }
        }
    }
}

fn track_one(
    prev: &Pyramid,
    cur: &Pyramid,
    p: Point,
    params: &LkParams,
    scratch: &mut Scratch,
) -> PointMatch {
    let failed = PointMatch { src: p, dst: p, tracked: false };
    let radius = (params.window as i64 - 1) / 2;
    let top = prev.num_levels().min(cur.num_levels()) - 1;
    let eps2 = params.epsilon * params.epsilon;

    // Guess carried across levels, expressed in the coordinates of the level
    // being processed.
    let mut guess = (0.0f64, 0.0f64);
    let mut flow = (0.0f64, 0.0f64);

    for level_idx in (0..=top).rev() {
        let scale = (1u64 << level_idx) as f64;
        let img0 = prev.level(level_idx);
        let img1 = cur.level(level_idx);
        let u = Point::new(p.x / scale, p.y / scale);

        // Gradient sampling needs a 1px apron for central differences.
        let win = match clamp_window(img0, u, radius, 1.0) {
            Some(w) => w,
            None if level_idx > 0 => {
                guess = (guess.0 * 2.0, guess.1 * 2.0);
                continue;
            }
            None => return failed,
        };
        let (ww, wh) = (win.width(), win.height());

        // One padded snapshot of the template window; gradients come from
        // central differences on the snapshot.
        let padded = &mut scratch.padded[..(ww + 2) * (wh + 2)];
        sample_window(
            img0,
            u.x + win.lo_x as f64 - 1.0,
            u.y + win.lo_y as f64 - 1.0,
            ww + 2,
            wh + 2,
            padded,
        );
        let template = &mut scratch.template[..ww * wh];
        let grad_x = &mut scratch.grad_x[..ww * wh];
        let grad_y = &mut scratch.grad_y[..ww * wh];
        let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
        for row in 0..wh {
            let above = &padded[row * (ww + 2)..];
            let here = &padded[(row + 1) * (ww + 2)..];
            let below = &padded[(row + 2) * (ww + 2)..];
            for col in 0..ww {
                let ix = (here[col + 2] - here[col]) * 0.5;
                let iy = (below[col + 1] - above[col + 1]) * 0.5;
                let i = row * ww + col;
                template[i] = here[col + 1];
                grad_x[i] = ix;
                grad_y[i] = iy;
                gxx += (ix * ix) as f64;
                gxy += (ix * iy) as f64;
                gyy += (iy * iy) as f64;
            }
        }

        // Minimum eigenvalue of the 2x2 gradient matrix, per pixel.
        let n = (ww * wh) as f64;
        let trace = gxx + gyy;
        let disc = ((gxx - gyy) * (gxx - gyy) + 4.0 * gxy * gxy).sqrt();
        let min_eig = 0.5 * (trace - disc) / n;
        if min_eig < params.min_eigenvalue {
            return failed;
        }
        let det = gxx * gyy - gxy * gxy;
        if det.abs() < 1e-12 {
            return failed;
        }

        let mut nu = (0.0f64, 0.0f64);
        for _ in 0..params.max_iters {
            let cx = u.x + guess.0 + nu.0;
            let cy = u.y + guess.1 + nu.1;
            // Fail once the point itself leaves the image; window taps near
            // the border replicate the edge instead of aborting.
            if cx < 0.0 || cy < 0.0 || cx > img1.width as f64 - 1.0 || cy > img1.height as f64 - 1.0
            {
                return failed;
            }
            let moved = &mut scratch.moved[..ww * wh];
            sample_window(img1, cx + win.lo_x as f64, cy + win.lo_y as f64, ww, wh, moved);
            let (mut bx, mut by) = (0.0f64, 0.0f64);
            for i in 0..ww * wh {
                let diff = template[i] - moved[i];
                bx += (diff * grad_x[i]) as f64;
                by += (diff * grad_y[i]) as f64;
            }
            let eta_x = (gyy * bx - gxy * by) / det;
            let eta_y = (gxx * by - gxy * bx) / det;
            if !eta_x.is_finite() || !eta_y.is_finite() {
                return failed;
            }
            nu.0 += eta_x;
            nu.1 += eta_y;
            if eta_x * eta_x + eta_y * eta_y < eps2 {
                break;
            }
        }

        flow = (guess.0 + nu.0, guess.1 + nu.1);
        if level_idx > 0 {
            guess = (flow.0 * 2.0, flow.1 * 2.0);
        }
    }

    let dst = Point::new(p.x + flow.0, p.y + flow.1);
    let base = cur.level(0);
    if dst.x < 0.0
        || dst.y < 0.0
        || dst.x > base.width as f64 - 1.0
        || dst.y > base.height as f64 - 1.0
    {
        return failed;
    }
    PointMatch { src: p, dst, tracked: true }
}
