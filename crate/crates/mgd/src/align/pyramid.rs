//! Image pyramids for coarse-to-fine tracking.

use crate::imgproc::Frame;

/// One pyramid level, stored as f32 for subpixel interpolation.
#[derive(Clone, Debug)]
pub(crate) struct Level {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Level {
    /// Bilinear sample with edge replication outside the image.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        self.sample(
            x.clamp(0.0, (self.width - 1) as f64),
            y.clamp(0.0, (self.height - 1) as f64),
        )
    }

    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x as usize; // callers guarantee x, y >= 0 and in bounds
        let y0 = y as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.data[y0 * self.width + x0] as f64;
        let p10 = self.data[y0 * self.width + x1] as f64;
        let p01 = self.data[y1 * self.width + x0] as f64;
        let p11 = self.data[y1 * self.width + x1] as f64;
        (p00 * (1.0 - fx) + p10 * fx) * (1.0 - fy) + (p01 * (1.0 - fx) + p11 * fx) * fy
    }
}

/// Downsampling pyramid. Level 0 is the source frame; each further level
/// halves the resolution with 2×2 box averaging.
#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: Vec<Level>,
}

impl Pyramid {
    /// Build up to `levels` levels. Construction stops early once a level
    /// would fall under 16 pixels on a side.
    pub fn build(f: &Frame, levels: usize) -> Self {
        assert!(levels >= 1);
        let base = Level {
            width: f.width() as usize,
            height: f.height() as usize,
            data: f.pixels().iter().map(|&p| p as f32).collect(),
        };
        let mut out = vec![base];
        while out.len() < levels {
            let prev = out.last().unwrap();
            let w = prev.width / 2;
            let h = prev.height / 2;
            if w < 16 || h < 16 {
                break;
            }
            let mut data = vec![0f32; w * h];
            for y in 0..h {
                let r0 = &prev.data[2 * y * prev.width..];
                let r1 = &prev.data[(2 * y + 1) * prev.width..];
                let row = &mut data[y * w..(y + 1) * w];
                for (x, out) in row.iter_mut().enumerate() {
                    *out = (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * 0.25;
                }
            }
            out.push(Level { width: w, height: h, data });
        }
        Self { levels: out }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub(crate) fn level(&self, i: usize) -> &Level {
        &self.levels[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_requested_levels() {
        let f = Frame::filled(128, 96, 0, 50);
        let p = Pyramid::build(&f, 3);
        assert_eq!(p.num_levels(), 3);
        assert_eq!(p.level(1).width, 64);
        assert_eq!(p.level(2).width, 32);
        assert!(p.level(2).data.iter().all(|&v| (v - 50.0).abs() < 1e-6));
    }

    #[test]
    fn stops_before_tiny_levels() {
        let f = Frame::filled(40, 40, 0, 0);
        let p = Pyramid::build(&f, 5);
        assert_eq!(p.num_levels(), 2); // 40 -> 20 -> (10 would be too small)
    }
}
