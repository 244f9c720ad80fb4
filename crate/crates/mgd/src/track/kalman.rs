//! Constant-velocity Kalman filter over box observations.
//!
//! State is `[u, v, s, r, du, dv, ds]`: center, area, aspect ratio and the
//! per-step velocities of the first three. Aspect ratio carries no velocity.
//! Noise constants follow the reference SORT filter.

use crate::imgproc::BoundingBox;
use nalgebra::{SMatrix, SVector};

type Mat7 = SMatrix<f64, 7, 7>;
type Vec7 = SVector<f64, 7>;
type Mat4x7 = SMatrix<f64, 4, 7>;
type Mat4 = SMatrix<f64, 4, 4>;
type Vec4 = SVector<f64, 4>;

#[derive(Clone, Debug)]
pub struct KalmanBoxState {
    x: Vec7,
    p: Mat7,
}

fn transition() -> Mat7 {
    let mut f = Mat7::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> Mat4x7 {
    let mut h = Mat4x7::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h[(2, 2)] = 1.0;
    h[(3, 3)] = 1.0;
    h
}

fn process_noise() -> Mat7 {
    Mat7::from_diagonal(&Vec7::from_column_slice(&[1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4]))
}

fn measurement_noise() -> Mat4 {
    Mat4::from_diagonal(&Vec4::new(1.0, 1.0, 10.0, 10.0))
}

fn box_to_observation(b: &BoundingBox) -> Vec4 {
    let (cx, cy) = b.center();
    Vec4::new(cx, cy, b.w * b.h, b.w / b.h)
}

fn state_to_box(x: &Vec7) -> BoundingBox {
    let s = x[2].max(1.0);
    let r = x[3].max(1e-6);
    let w = (s * r).sqrt();
    let h = s / w;
    BoundingBox::new(x[0] - w / 2.0, x[1] - h / 2.0, w, h)
}

impl KalmanBoxState {
    /// Initialize from a first observation with zero velocity and large
    /// velocity uncertainty.
    pub fn new(b: &BoundingBox) -> Self {
        let z = box_to_observation(b);
        let mut x = Vec7::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&z);
        let p = Mat7::from_diagonal(&Vec7::from_column_slice(&[
            10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4,
        ]));
        Self { x, p }
    }

    /// Advance one step and return the predicted box. The area component is
    /// floored at 1 px² if the velocity drives it non-positive.
    pub fn predict(&mut self) -> BoundingBox {
        let f = transition();
        self.x = f * self.x;
        if self.x[2] < 1.0 {
            self.x[2] = 1.0;
        }
        self.p = f * self.p * f.transpose() + process_noise();
        self.symmetrize();
        state_to_box(&self.x)
    }

    /// Fold in an observed box (Joseph-form covariance update).
    pub fn update(&mut self, b: &BoundingBox) {
        let h = observation();
        let r = measurement_noise();
        let z = box_to_observation(b);
        let innovation = z - h * self.x;
        let s = h * self.p * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let gain = self.p * h.transpose() * s_inv;
        self.x += gain * innovation;
        if self.x[2] < 1.0 {
            self.x[2] = 1.0;
        }
        if self.x[3] < 1e-6 {
            self.x[3] = 1e-6;
        }
        let ident = Mat7::identity();
        let ikh = ident - gain * h;
        self.p = ikh * self.p * ikh.transpose() + gain * r * gain.transpose();
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    /// Current state as a box, without advancing time.
    pub fn current_box(&self) -> BoundingBox {
        state_to_box(&self.x)
    }

    pub fn state(&self) -> &SVector<f64, 7> {
        &self.x
    }

    pub fn covariance(&self) -> &SMatrix<f64, 7, 7> {
        &self.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fresh_track_predicts_its_own_box() {
        let b = BoundingBox::new(10.0, 20.0, 8.0, 6.0);
        let mut k = KalmanBoxState::new(&b);
        let p = k.predict();
        assert_abs_diff_eq!(p.x, b.x, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, b.y, epsilon = 1e-9);
        assert_abs_diff_eq!(p.w, b.w, epsilon = 1e-9);
        assert_abs_diff_eq!(p.h, b.h, epsilon = 1e-9);
    }

    #[test]
    fn aspect_ratio_constant_under_prediction() {
        let b = BoundingBox::new(0.0, 0.0, 12.0, 4.0);
        let mut k = KalmanBoxState::new(&b);
        let r0 = k.state()[3];
        for _ in 0..50 {
            k.predict();
            assert_abs_diff_eq!(k.state()[3], r0, epsilon = 1e-12);
        }
    }

    #[test]
    fn learns_constant_velocity() {
        // Detections move +5 px/step in x; after ten updates the next
        // prediction should be within 1 px of the extrapolation.
        let mut k = KalmanBoxState::new(&BoundingBox::new(0.0, 0.0, 10.0, 10.0));
        for i in 1..=10 {
            k.predict();
            k.update(&BoundingBox::new(5.0 * i as f64, 0.0, 10.0, 10.0));
        }
        let p = k.predict();
        let (cx, _) = p.center();
        let expected = 5.0 * 11.0 + 5.0; // center of box at x = 55
        assert!((cx - expected).abs() < 1.0, "center {cx} vs {expected}");
    }

    #[test]
    fn matches_reference_recursion() {
        // Plain-loop reference implementation of the same recursion, kept
        // free of nalgebra operators on purpose.
        fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
            let (n, m, p) = (a.len(), b.len(), b[0].len());
            let mut out = vec![vec![0.0; p]; n];
            for i in 0..n {
                for k in 0..m {
                    for j in 0..p {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        }
        fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
            let (n, m) = (a.len(), a[0].len());
            let mut out = vec![vec![0.0; n]; m];
            for i in 0..n {
                for j in 0..m {
                    out[j][i] = a[i][j];
                }
            }
            out
        }
        fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
                .collect()
        }

        let f: Vec<Vec<f64>> = (0..7)
            .map(|i| {
                (0..7)
                    .map(|j| {
                        if i == j || (i < 3 && j == i + 4) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let q: Vec<Vec<f64>> = (0..7)
            .map(|i| {
                (0..7)
                    .map(|j| {
                        if i != j {
                            0.0
                        } else {
                            [1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4][i]
                        }
                    })
                    .collect()
            })
            .collect();

        let b = BoundingBox::new(3.0, 4.0, 10.0, 8.0);
        let mut k = KalmanBoxState::new(&b);
        // Reference predict of mean and covariance, one step.
        let x0: Vec<f64> = k.state().iter().copied().collect();
        let p0: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..7).map(|j| k.covariance()[(i, j)]).collect())
            .collect();
        let x1: Vec<f64> = f
            .iter()
            .map(|row| row.iter().zip(&x0).map(|(a, b)| a * b).sum())
            .collect();
        let p1 = add(&matmul(&matmul(&f, &p0), &transpose(&f)), &q);

        k.predict();
        for i in 0..7 {
            assert_abs_diff_eq!(k.state()[i], x1[i], epsilon = 1e-12);
            for j in 0..7 {
                assert_abs_diff_eq!(k.covariance()[(i, j)], p1[i][j], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd_over_many_cycles() {
        let mut k = KalmanBoxState::new(&BoundingBox::new(0.0, 0.0, 6.0, 6.0));
        for i in 0..1000 {
            k.predict();
            let jitter = (i % 7) as f64 * 0.3;
            k.update(&BoundingBox::new(i as f64 * 0.5 + jitter, jitter, 6.0, 6.0));
            let p = k.covariance();
            for a in 0..7 {
                for b in 0..7 {
                    assert!((p[(a, b)] - p[(b, a)]).abs() < 1e-9);
                }
            }
            let eig = p.symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8), "cycle {i}");
        }
    }
}
