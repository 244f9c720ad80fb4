//! RANSAC homography estimation over tracked point matches, with a
//! normalized direct linear transform for model fitting.

use super::{AlignError, Homography, Point, PointMatch};
use nalgebra::{Matrix3, SMatrix, SVector};
use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub struct RansacParams {
    /// Inlier gate on reprojection error, in pixels.
    pub reproj_threshold: f64,
    /// Target probability of having seen one all-inlier sample.
    pub confidence: f64,
    /// Hard cap on sampling iterations.
    pub max_iters: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { reproj_threshold: 3.0, confidence: 0.995, max_iters: 2000 }
    }
}

/// Similarity normalization: translate the centroid to the origin and scale
/// the mean distance to sqrt(2).
fn normalize_points(pts: &[Point]) -> Option<(Matrix3<f64>, Vec<Point>)> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts.iter().map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if mean_dist < 1e-9 {
        return None; // coincident points
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let normed = pts.iter().map(|p| Point::new(s * (p.x - cx), s * (p.y - cy))).collect();
    Some((t, normed))
}

/// Least-squares DLT fit of `dst = H src` over all supplied pairs.
fn dlt(src: &[Point], dst: &[Point]) -> Option<Homography> {
    debug_assert!(src.len() >= 4 && src.len() == dst.len());
    let (t_src, ns) = normalize_points(src)?;
    let (t_dst, nd) = normalize_points(dst)?;

    // Accumulate AᵀA directly; the null vector of A is the eigenvector of
    // AᵀA with the smallest eigenvalue.
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    let mut add_row = |row: [f64; 9]| {
        for i in 0..9 {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..9 {
                ata[(i, j)] += row[i] * row[j];
            }
        }
    };
    for (s, d) in ns.iter().zip(&nd) {
        add_row([0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y]);
        add_row([s.x, s.y, 1.0, 0.0, 0.0, 0.0, -d.x * s.x, -d.x * s.y, -d.x]);
    }
    for i in 0..9 {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let eig = ata.symmetric_eigen();
    let mut best = 0;
    for i in 1..9 {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    let h: SVector<f64, 9> = eig.eigenvectors.column(best).into_owned();
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst.try_inverse()?;
    Homography::from_matrix(t_dst_inv * hn * t_src).ok()
}

fn reproj_error_sq(h: &Homography, m: &PointMatch) -> f64 {
    let m3 = h.matrix();
    let z = m3[(2, 0)] * m.src.x + m3[(2, 1)] * m.src.y + m3[(2, 2)];
    if z.abs() < 1e-12 {
        return f64::INFINITY;
    }
    let x = (m3[(0, 0)] * m.src.x + m3[(0, 1)] * m.src.y + m3[(0, 2)]) / z;
    let y = (m3[(1, 0)] * m.src.x + m3[(1, 1)] * m.src.y + m3[(1, 2)]) / z;
    (x - m.dst.x).powi(2) + (y - m.dst.y).powi(2)
}

fn count_inliers(h: &Homography, matches: &[(usize, PointMatch)], thr_sq: f64) -> usize {
    matches.iter().filter(|(_, m)| reproj_error_sq(h, m) < thr_sq).count()
}

/// Estimate the homography mapping `src` points onto `dst` points.
///
/// RANSAC over 4-point minimal samples with adaptive early exit, followed by
/// a least-squares refit on the consensus set. The returned flags mark the
/// inliers of the final model, index-aligned with `matches` (untracked
/// entries are never inliers). Trials consume `rng` sequentially, so a seeded
/// generator makes the estimate reproducible.
pub fn estimate_homography<R: Rng>(
    matches: &[PointMatch],
    params: &RansacParams,
    rng: &mut R,
) -> Result<(Homography, Vec<bool>), AlignError> {
    let tracked: Vec<(usize, PointMatch)> = matches
        .iter()
        .enumerate()
        .filter(|(_, m)| m.tracked)
        .map(|(i, m)| (i, *m))
        .collect();
    let n = tracked.len();
    if n < 4 {
        return Err(AlignError::TooFewMatches(n));
    }
    let thr_sq = params.reproj_threshold * params.reproj_threshold;

    let mut indices: Vec<usize> = (0..n).collect();
    let mut best: Option<(Homography, usize)> = None;
    let mut needed = params.max_iters;
    let mut iter = 0;
    while iter < needed && iter < params.max_iters {
        iter += 1;
        // Partial Fisher-Yates: the first four entries become the sample.
        for j in 0..4 {
            let k = rng.random_range(j..n);
            indices.swap(j, k);
        }
        let src: Vec<Point> = indices[..4].iter().map(|&i| tracked[i].1.src).collect();
        let dst: Vec<Point> = indices[..4].iter().map(|&i| tracked[i].1.dst).collect();
        let Some(h) = dlt(&src, &dst) else { continue };
        let inliers = count_inliers(&h, &tracked, thr_sq);
        if inliers >= 4 && best.as_ref().is_none_or(|(_, b)| inliers > *b) {
            best = Some((h, inliers));
            // Adaptive iteration count from the observed inlier ratio.
            let w = inliers as f64 / n as f64;
            let p_outlier_sample = (1.0 - w.powi(4)).clamp(1e-12, 1.0 - 1e-12);
            let est = ((1.0 - params.confidence).ln() / p_outlier_sample.ln()).ceil();
            needed = (est as usize).max(1).min(params.max_iters);
        }
    }

    let (mut model, _) = best.ok_or(AlignError::EstimationFailed)?;

    // Refit on the full consensus set, keeping the minimal-sample model if
    // the refit degrades or fails.
    let consensus: Vec<&(usize, PointMatch)> =
        tracked.iter().filter(|(_, m)| reproj_error_sq(&model, m) < thr_sq).collect();
    if consensus.len() > 4 {
        let src: Vec<Point> = consensus.iter().map(|(_, m)| m.src).collect();
        let dst: Vec<Point> = consensus.iter().map(|(_, m)| m.dst).collect();
        if let Some(refit) = dlt(&src, &dst) {
            if count_inliers(&refit, &tracked, thr_sq) >= consensus.len() {
                model = refit;
            }
        }
    }

    let mut flags = vec![false; matches.len()];
    let mut final_inliers = 0;
    for (orig_idx, m) in &tracked {
        if reproj_error_sq(&model, m) < thr_sq {
            flags[*orig_idx] = true;
            final_inliers += 1;
        }
    }
    if final_inliers < 4 {
        return Err(AlignError::EstimationFailed);
    }
    Ok((model, flags))
}
