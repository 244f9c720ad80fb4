//! Synthetic aerial-scene generator with per-frame ground truth: a value-noise
//! background plane seen through a drifting/rotating/zooming camera, plus
//! independently moving targets and background-anchored distractors.

use crate::align::Homography;
use crate::eval::GroundTruth;
use crate::imgproc::{BoundingBox, Frame};
use crate::par;
use serde::{Deserialize, Serialize};

/// Per-frame camera motion, expressed as what the background does in image
/// space: translation in px/frame, rotation in degrees/frame about the image
/// center and a zoom factor per frame (1.0 = none).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraPath {
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    #[serde(default)]
    pub rot_deg: f64,
    #[serde(default = "one")]
    pub zoom: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CameraPath {
    fn default() -> Self {
        Self { dx: 0.0, dy: 0.0, rot_deg: 0.0, zoom: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPath {
    Linear,
    Sinusoidal,
}

/// An independently moving target, rendered as an opaque square. Targets
/// bounce off the frame borders so long clips keep them in view.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TargetSpec {
    pub size: u32,
    /// Speed along the path, px/frame.
    pub speed: f64,
    pub path: TargetPath,
    /// -1 (black) .. 1 (white); rendered intensity is 128 + 127 * contrast.
    pub contrast: f64,
    pub start: (f64, f64),
    pub direction: (f64, f64),
    /// Perpendicular oscillation amplitude for sinusoidal paths, px.
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    24.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    /// Background-anchored square that jitters around its anchor, the way a
    /// 3D structure disagrees with the plane homography.
    ParallaxSprite,
    /// Background-anchored soft disc swaying horizontally.
    SwayingBlob,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistractorSpec {
    pub size: u32,
    /// Oscillation amplitude around the anchored position, px.
    pub amplitude: f64,
    pub kind: DistractorKind,
    /// Image position at frame 0; the anchor rides the camera thereafter.
    pub anchor: (f64, f64),
    #[serde(default = "default_distractor_period")]
    pub period: f64,
}

fn default_distractor_period() -> f64 {
    9.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BackgroundSpec {
    #[serde(default = "default_bg_base")]
    pub base: f64,
    #[serde(default = "default_bg_amplitude")]
    pub amplitude: f64,
    /// Largest noise wavelength in pixels.
    #[serde(default = "default_bg_scale")]
    pub scale: f64,
}

fn default_bg_base() -> f64 {
    130.0
}
fn default_bg_amplitude() -> f64 {
    35.0
}
fn default_bg_scale() -> f64 {
    48.0
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self { base: default_bg_base(), amplitude: default_bg_amplitude(), scale: default_bg_scale() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    /// Clip length in frames.
    pub length: usize,
    #[serde(default)]
    pub camera: CameraPath,
    #[serde(default)]
    pub background: BackgroundSpec,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub distractors: Vec<DistractorSpec>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 || self.length == 0 {
            return Err("width, height and length must be positive".into());
        }
        for t in &self.targets {
            if t.size < 3 {
                return Err(format!("target size {} below the 3 px floor", t.size));
            }
            if t.speed < 0.0 {
                return Err("target speed must be non-negative".into());
            }
        }
        Ok(())
    }
}

// --- deterministic value noise -------------------------------------------

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let h = splitmix(seed ^ (ix as u64).wrapping_mul(0x9e3779b97f4a7c15) ^ (iy as u64).wrapping_mul(0xc2b2ae3d27d4eb4f));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let ix = x.floor();
    let iy = y.floor();
    let fx = smooth(x - ix);
    let fy = smooth(y - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice(ix, iy, seed);
    let v10 = lattice(ix + 1, iy, seed);
    let v01 = lattice(ix, iy + 1, seed);
    let v11 = lattice(ix + 1, iy + 1, seed);
    (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
}

/// Three-octave value noise in [-1, 1], defined over the whole plane.
fn background_noise(x: f64, y: f64, seed: u64, scale: f64) -> f64 {
    let n = 0.55 * value_noise(x / scale, y / scale, seed)
        + 0.30 * value_noise(x / (scale * 0.37), y / (scale * 0.37), seed ^ 0xabcd)
        + 0.15 * value_noise(x / (scale * 0.13), y / (scale * 0.13), seed ^ 0x1234);
    2.0 * (n - 0.5)
}

// --- camera and object paths ----------------------------------------------

/// Content transform for one step: where frame-(t) coordinates of a
/// background point land relative to frame-(t+1).
fn camera_step(cfg: &SynthConfig) -> Homography {
    let center = (cfg.width as f64 / 2.0, cfg.height as f64 / 2.0);
    let rot = Homography::rotation_about(center, cfg.camera.rot_deg.to_radians(), cfg.camera.zoom);
    Homography::translation(cfg.camera.dx, cfg.camera.dy)
        .compose(&rot)
        .expect("camera step is invertible")
}

/// Cumulative content transforms M_t (frame-0 coords -> frame-t coords).
/// The true pairwise alignment homography from frame u to frame t is
/// `M_t * M_u^-1`.
pub fn camera_transforms(cfg: &SynthConfig) -> Vec<Homography> {
    let step = camera_step(cfg);
    let mut out = Vec::with_capacity(cfg.length);
    let mut acc = Homography::identity();
    for _ in 0..cfg.length {
        out.push(acc);
        acc = step.compose(&acc).expect("camera path stays invertible");
    }
    out
}

fn normalize(v: (f64, f64)) -> (f64, f64) {
    let n = v.0.hypot(v.1);
    if n == 0.0 {
        (1.0, 0.0)
    } else {
        (v.0 / n, v.1 / n)
    }
}

/// Linear positions with border bounce, one per frame.
fn target_positions(t: &TargetSpec, cfg: &SynthConfig) -> Vec<(f64, f64)> {
    let margin = t.size as f64 / 2.0 + 1.0;
    let (lo_x, hi_x) = (margin, cfg.width as f64 - 1.0 - margin);
    let (lo_y, hi_y) = (margin, cfg.height as f64 - 1.0 - margin);
    let dir = normalize(t.direction);
    let mut vel = (dir.0 * t.speed, dir.1 * t.speed);
    let mut pos = (t.start.0.clamp(lo_x, hi_x), t.start.1.clamp(lo_y, hi_y));
    let mut out = Vec::with_capacity(cfg.length);
    for frame in 0..cfg.length {
        let mut p = pos;
        if t.path == TargetPath::Sinusoidal && t.amplitude != 0.0 {
            // Oscillate perpendicular to the travel direction.
            let phase = 2.0 * std::f64::consts::PI * frame as f64 / t.period;
            let perp = (-dir.1, dir.0);
            p = (p.0 + perp.0 * t.amplitude * phase.sin(), p.1 + perp.1 * t.amplitude * phase.sin());
            p.0 = p.0.clamp(lo_x, hi_x);
            p.1 = p.1.clamp(lo_y, hi_y);
        }
        out.push(p);
        pos.0 += vel.0;
        pos.1 += vel.1;
        if pos.0 < lo_x {
            pos.0 = 2.0 * lo_x - pos.0;
            vel.0 = -vel.0;
        } else if pos.0 > hi_x {
            pos.0 = 2.0 * hi_x - pos.0;
            vel.0 = -vel.0;
        }
        if pos.1 < lo_y {
            pos.1 = 2.0 * lo_y - pos.1;
            vel.1 = -vel.1;
        } else if pos.1 > hi_y {
            pos.1 = 2.0 * hi_y - pos.1;
            vel.1 = -vel.1;
        }
    }
    out
}

fn distractor_position(d: &DistractorSpec, transform: &Homography, frame: usize) -> (f64, f64) {
    let anchored = transform.apply(crate::align::Point::new(d.anchor.0, d.anchor.1));
    let phase = 2.0 * std::f64::consts::PI * frame as f64 / d.period;
    match d.kind {
        DistractorKind::ParallaxSprite => {
            (anchored.x + d.amplitude * phase.sin(), anchored.y + 0.5 * d.amplitude * phase.cos())
        }
        DistractorKind::SwayingBlob => (anchored.x + d.amplitude * phase.sin(), anchored.y),
    }
}

// --- rendering -------------------------------------------------------------

/// Axis-separable coverage of pixel `(px, py)` by a square of side `size`
/// centered at `(cx, cy)`.
fn square_coverage(px: f64, py: f64, cx: f64, cy: f64, size: f64) -> f64 {
    let half = size / 2.0;
    let ox = (px + 0.5).min(cx + half) - (px - 0.5).max(cx - half);
    let oy = (py + 0.5).min(cy + half) - (py - 0.5).max(cy - half);
    ox.max(0.0) * oy.max(0.0)
}

fn disc_coverage(px: f64, py: f64, cx: f64, cy: f64, radius: f64) -> f64 {
    let d = (px - cx).hypot(py - cy);
    (radius + 0.5 - d).clamp(0.0, 1.0)
}

struct Sprite {
    center: (f64, f64),
    size: f64,
    value: f64,
    disc: bool,
    /// Local texture riding along with the sprite; uniform fill when None.
    /// A moving uniform patch only differences at its edges, which is not
    /// how real textured targets behave.
    pattern_seed: Option<u64>,
}

fn render_frame(cfg: &SynthConfig, seed: u64, index: usize, view: &Homography, sprites: &[Sprite]) -> Frame {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let inv = view.inverse().expect("camera transform is invertible");
    let m = *inv.matrix();
    let bg = &cfg.background;
    let mut pixels = vec![0u8; w * h];
    par::fill_rows(&mut pixels, w, |y, row| {
        let yf = y as f64;
        let mut qx = m[(0, 1)] * yf + m[(0, 2)];
        let mut qy = m[(1, 1)] * yf + m[(1, 2)];
        let mut qz = m[(2, 1)] * yf + m[(2, 2)];
        for (x, out) in row.iter_mut().enumerate() {
            let wx = qx / qz;
            let wy = qy / qz;
            let mut v = bg.base + bg.amplitude * background_noise(wx, wy, seed, bg.scale);
            for s in sprites {
                let cov = if s.disc {
                    disc_coverage(x as f64, yf, s.center.0, s.center.1, s.size / 2.0)
                } else {
                    square_coverage(x as f64, yf, s.center.0, s.center.1, s.size)
                };
                if cov > 0.0 {
                    let fill = match s.pattern_seed {
                        Some(ps) => {
                            let lx = x as f64 - s.center.0;
                            let ly = yf - s.center.1;
                            s.value + 60.0 * (value_noise(lx / 2.7, ly / 2.7, ps) - 0.5)
                        }
                        None => s.value,
                    };
                    v = v * (1.0 - cov) + fill * cov;
                }
            }
            *out = v.round().clamp(0.0, 255.0) as u8;
            qx += m[(0, 0)];
            qy += m[(1, 0)];
            qz += m[(2, 0)];
        }
    });
    Frame::new(cfg.width, cfg.height, index as u64, pixels)
}

const SPRITE_VALUE: f64 = 30.0;
const BLOB_VALUE: f64 = 228.0;

/// Render the whole clip. Returns the frames, the target ground truth and
/// the distractor truth (boxes of rendered distractors per frame).
/// Bit-deterministic given `(cfg, seed)`.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> (Vec<Frame>, GroundTruth, GroundTruth) {
    cfg.validate().expect("invalid synth config");
    let transforms = camera_transforms(cfg);
    let per_target: Vec<Vec<(f64, f64)>> =
        cfg.targets.iter().map(|t| target_positions(t, cfg)).collect();

    let mut target_gt = GroundTruth::new();
    let mut distractor_gt = GroundTruth::new();
    let mut frame_sprites: Vec<Vec<Sprite>> = Vec::with_capacity(cfg.length);
    for frame in 0..cfg.length {
        let mut sprites = Vec::new();
        for (tid, (spec, positions)) in cfg.targets.iter().zip(&per_target).enumerate() {
            let (cx, cy) = positions[frame];
            let size = spec.size as f64;
            sprites.push(Sprite {
                center: (cx, cy),
                size,
                value: (128.0 + 127.0 * spec.contrast).clamp(0.0, 255.0),
                disc: false,
                pattern_seed: Some(seed ^ (0x7161 + tid as u64)),
            });
            target_gt.push(
                frame as u64,
                tid as u64,
                BoundingBox::new(cx - size / 2.0, cy - size / 2.0, size, size),
            );
        }
        for (did, spec) in cfg.distractors.iter().enumerate() {
            let (cx, cy) = distractor_position(spec, &transforms[frame], frame);
            let size = spec.size as f64;
            let bbox = BoundingBox::new(cx - size / 2.0, cy - size / 2.0, size, size);
            let frame_box = BoundingBox::new(0.0, 0.0, cfg.width as f64, cfg.height as f64);
            if bbox.intersection(&frame_box).is_some() {
                sprites.push(Sprite {
                    center: (cx, cy),
                    size,
                    value: match spec.kind {
                        DistractorKind::ParallaxSprite => SPRITE_VALUE,
                        DistractorKind::SwayingBlob => BLOB_VALUE,
                    },
                    disc: spec.kind == DistractorKind::SwayingBlob,
                    pattern_seed: None,
                });
                distractor_gt.push(frame as u64, did as u64, bbox);
            }
        }
        frame_sprites.push(sprites);
    }

    let indices: Vec<usize> = (0..cfg.length).collect();
    let frames = par::map_slice(&indices, |&i| {
        render_frame(cfg, seed, i, &transforms[i], &frame_sprites[i])
    });
    (frames, target_gt, distractor_gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{estimate_homography, lk_track, sample_grid, LkParams, RansacParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base_cfg() -> SynthConfig {
        SynthConfig {
            width: 320,
            height: 240,
            length: 8,
            camera: CameraPath::default(),
            background: BackgroundSpec::default(),
            targets: vec![],
            distractors: vec![],
        }
    }

    #[test]
    fn static_scene_renders_identical_frames() {
        let cfg = base_cfg();
        let (frames, gt, _) = synth_generate(&cfg, 7);
        assert_eq!(frames.len(), 8);
        assert_eq!(gt.total_boxes(), 0);
        for f in &frames[1..] {
            assert_eq!(f.pixels(), frames[0].pixels());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut cfg = base_cfg();
        cfg.camera = CameraPath { dx: 1.5, dy: -0.5, rot_deg: 0.1, zoom: 1.001 };
        cfg.targets = vec![TargetSpec {
            size: 8,
            speed: 3.0,
            path: TargetPath::Linear,
            contrast: 0.9,
            start: (60.0, 60.0),
            direction: (1.0, 0.4),
            amplitude: 0.0,
            period: 24.0,
        }];
        let (fa, gta, _) = synth_generate(&cfg, 42);
        let (fb, gtb, _) = synth_generate(&cfg, 42);
        for (a, b) in fa.iter().zip(&fb) {
            assert_eq!(a.pixels(), b.pixels());
        }
        let ra: Vec<_> = gta.records().collect();
        let rb: Vec<_> = gtb.records().collect();
        assert_eq!(ra, rb);

        let (fc, _, _) = synth_generate(&cfg, 43);
        assert_ne!(fa[0].pixels(), fc[0].pixels(), "seed must matter");
    }

    #[test]
    fn target_boxes_advance_along_the_path() {
        let mut cfg = base_cfg();
        cfg.targets = vec![TargetSpec {
            size: 8,
            speed: 4.0,
            path: TargetPath::Linear,
            contrast: 0.8,
            start: (50.0, 100.0),
            direction: (1.0, 0.0),
            amplitude: 0.0,
            period: 24.0,
        }];
        let (_, gt, _) = synth_generate(&cfg, 1);
        for f in 1..cfg.length as u64 {
            let prev = gt.boxes(f - 1)[0].1;
            let cur = gt.boxes(f)[0].1;
            assert!((cur.x - prev.x - 4.0).abs() < 1e-9);
            assert_eq!(cur.w, 8.0);
        }
    }

    #[test]
    fn bounce_keeps_targets_inside() {
        let mut cfg = base_cfg();
        cfg.length = 400;
        cfg.targets = vec![TargetSpec {
            size: 8,
            speed: 3.0,
            path: TargetPath::Linear,
            contrast: 0.9,
            start: (30.0, 30.0),
            direction: (1.0, 0.37),
            amplitude: 0.0,
            period: 24.0,
        }];
        let (_, gt, _) = synth_generate(&cfg, 5);
        for (_, _, b) in gt.records() {
            assert!(b.x >= 0.0 && b.y >= 0.0);
            assert!(b.right() <= cfg.width as f64 && b.bottom() <= cfg.height as f64);
        }
    }

    #[test]
    fn alignment_recovers_camera_translation() {
        let mut cfg = base_cfg();
        cfg.width = 640;
        cfg.height = 480;
        cfg.camera = CameraPath { dx: 3.0, dy: 0.0, rot_deg: 0.0, zoom: 1.0 };
        let (frames, _, _) = synth_generate(&cfg, 11);
        let pts = sample_grid(640, 480, 12, 9).unwrap();
        let matches = lk_track(&frames[3], &frames[4], &pts, &LkParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (h, _) = estimate_homography(&matches, &RansacParams::default(), &mut rng).unwrap();
        let m = h.matrix();
        assert!((m[(0, 2)] - 3.0).abs() < 0.3, "tx = {}", m[(0, 2)]);
        assert!(m[(1, 2)].abs() < 0.3, "ty = {}", m[(1, 2)]);
    }

    #[test]
    fn parallax_sprite_stays_near_its_anchor_under_static_camera() {
        let mut cfg = base_cfg();
        cfg.distractors = vec![DistractorSpec {
            size: 12,
            amplitude: 2.0,
            kind: DistractorKind::ParallaxSprite,
            anchor: (100.0, 100.0),
            period: 9.0,
        }];
        let (_, _, dgt) = synth_generate(&cfg, 3);
        for (_, _, b) in dgt.records() {
            let (cx, cy) = b.center();
            assert!((cx - 100.0).abs() <= 2.0 + 1e-9);
            assert!((cy - 100.0).abs() <= 1.0 + 1e-9);
        }
    }
}
