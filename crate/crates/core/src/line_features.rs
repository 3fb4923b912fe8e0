//! Polar line landmarks: fitting with covariance, split-and-merge
//! extraction, data association and endpoint maintenance.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::geometry::{transform_point, wrap_angle, Cov2, Point2, Pose2};

/// Infinite line `{p : p·(cos α, sin α) = ρ}` with `ρ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarLine {
    pub rho: f64,
    pub alpha: f64,
}

impl PolarLine {
    /// Builds a line, flipping the normal when `rho` is negative.
    pub fn new(rho: f64, alpha: f64) -> Self {
        if rho < 0.0 {
            PolarLine {
                rho: -rho,
                alpha: wrap_angle(alpha + PI),
            }
        } else {
            PolarLine {
                rho,
                alpha: wrap_angle(alpha),
            }
        }
    }

    pub fn normal(&self) -> Point2 {
        Point2::new(self.alpha.cos(), self.alpha.sin())
    }

    /// Foot of the perpendicular from the origin, `a`.
    pub fn anchor(&self) -> Point2 {
        self.normal() * self.rho
    }

    /// Unit direction along the line, `d`.
    pub fn direction(&self) -> Point2 {
        Point2::new(-self.alpha.sin(), self.alpha.cos())
    }

    /// Scalar coordinate of the projection of `p` onto the line.
    pub fn project(&self, p: &Point2) -> f64 {
        (p - self.anchor()).dot(&self.direction())
    }

    pub fn point_at(&self, t: f64) -> Point2 {
        self.anchor() + self.direction() * t
    }

    /// Orthogonal distance from `p`.
    pub fn distance(&self, p: &Point2) -> f64 {
        (p.dot(&self.normal()) - self.rho).abs()
    }

    /// Re-expresses a line given in the frame of `x` in the parent frame.
    pub fn transformed(&self, x: &Pose2) -> PolarLine {
        let phi = self.alpha + x.theta;
        PolarLine::new(self.rho + x.x * phi.cos() + x.y * phi.sin(), phi)
    }

    /// Re-expresses a parent-frame line in the frame of `x`.
    pub fn in_frame(&self, x: &Pose2) -> PolarLine {
        self.transformed(&x.inverse())
    }
}

/// A line segment extracted from one multiscan, in the observing frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentObservation {
    pub line: PolarLine,
    pub line_cov: Cov2,
    pub endpoints: [Point2; 2],
    pub indices: Vec<usize>,
}

impl SegmentObservation {
    /// The same segment seen from the parent frame of `x`. Covariance is
    /// left in the observing frame.
    pub fn transformed(&self, x: &Pose2) -> SegmentObservation {
        SegmentObservation {
            line: self.line.transformed(x),
            line_cov: self.line_cov,
            endpoints: self.endpoints.map(|p| transform_point(&p, x)),
            indices: self.indices.clone(),
        }
    }

    pub fn length(&self) -> f64 {
        (self.endpoints[1] - self.endpoints[0]).norm()
    }
}

pub type LandmarkId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub id: LandmarkId,
    pub line: PolarLine,
    pub endpoints: [Point2; 2],
}

impl Landmark {
    /// Projected interval `[s₁, s₂]` of the endpoints onto the line.
    pub fn interval(&self) -> (f64, f64) {
        let s1 = self.line.project(&self.endpoints[0]);
        let s2 = self.line.project(&self.endpoints[1]);
        (s1.min(s2), s1.max(s2))
    }
}

/// Total-least-squares fit and the Jacobian of `(ρ, α)` with respect to each
/// input point.
#[derive(Debug, Clone)]
pub struct LineFit {
    pub line: PolarLine,
    pub jacobians: Vec<Matrix2<f64>>,
    pub max_residual: f64,
}

pub fn fit_line_with_jacobians(points: &[Point2]) -> Result<LineFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("line fit needs 2 points, got {n}")));
    }
    let nf = n as f64;
    let mean = points.iter().sum::<Point2>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    // α = ½ atan2(D, N) minimizes Σ (p·n - ρ)²
    let num = syy - sxx;
    let den = -2.0 * sxy;
    let denom = num * num + den * den;
    let spread = sxx + syy;
    if spread <= 1e-18 || denom <= 1e-12 * spread * spread {
        return Err(Error::Degenerate(
            "points are coincident or have no dominant direction".into(),
        ));
    }
    let alpha_raw = 0.5 * den.atan2(num);
    let rho_raw = mean.x * alpha_raw.cos() + mean.y * alpha_raw.sin();
    let line = PolarLine::new(rho_raw, alpha_raw);
    let (s, c) = line.alpha.sin_cos();
    let lever = -mean.x * s + mean.y * c;

    let jacobians = points
        .iter()
        .map(|p| {
            let d = p - mean;
            let da_dx = (den * d.x - num * d.y) / denom;
            let da_dy = -(num * d.x + den * d.y) / denom;
            let dr_dx = c / nf + lever * da_dx;
            let dr_dy = s / nf + lever * da_dy;
            Matrix2::new(dr_dx, dr_dy, da_dx, da_dy)
        })
        .collect();
    let max_residual = points.iter().map(|p| line.distance(p)).fold(0.0, f64::max);
    Ok(LineFit {
        line,
        jacobians,
        max_residual,
    })
}

/// Fits a polar line and assembles its covariance from independent point
/// covariances, `Σ Jₖ Cov(pₖ) Jₖᵀ`.
pub fn fit_line(points: &[Point2], point_covs: &[Cov2]) -> Result<(PolarLine, Cov2)> {
    if points.len() != point_covs.len() {
        return Err(Error::Precondition(format!(
            "{} points but {} covariances",
            points.len(),
            point_covs.len()
        )));
    }
    let fit = fit_line_with_jacobians(points)?;
    let mut cov = Cov2::zeros();
    for (j, pc) in fit.jacobians.iter().zip(point_covs) {
        cov += j * pc * j.transpose();
    }
    Ok((fit.line, (cov + cov.transpose()) * 0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitMergeParams {
    /// Largest orthogonal residual tolerated inside one segment (m).
    pub split_threshold: f64,
    pub min_points: usize,
    /// Consecutive points further apart than this never share a segment (m).
    pub max_point_gap: f64,
    /// Segments shorter than this are discarded (m).
    pub min_length: f64,
}

impl Default for SplitMergeParams {
    fn default() -> Self {
        SplitMergeParams {
            split_threshold: 0.05,
            min_points: 5,
            max_point_gap: 0.5,
            min_length: 0.3,
        }
    }
}

fn chord_farthest(points: &[Point2], lo: usize, hi: usize) -> (usize, f64) {
    let a = points[lo];
    let b = points[hi];
    let ab = b - a;
    let len = ab.norm();
    let mut best = (lo, 0.0);
    for (k, p) in points.iter().enumerate().take(hi).skip(lo + 1) {
        let d = if len > 1e-12 {
            (ab.x * (p.y - a.y) - ab.y * (p.x - a.x)).abs() / len
        } else {
            (p - a).norm()
        };
        if d > best.1 {
            best = (k, d);
        }
    }
    best
}

fn split_run(points: &[Point2], lo: usize, hi: usize, params: &SplitMergeParams, out: &mut Vec<(usize, usize)>) {
    let mut stack = vec![(lo, hi)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo {
            continue;
        }
        let (m, d) = chord_farthest(points, lo, hi);
        if d > params.split_threshold && m > lo && m < hi {
            stack.push((m, hi));
            stack.push((lo, m));
            continue;
        }
        let Ok(fit) = fit_line_with_jacobians(&points[lo..=hi]) else {
            continue;
        };
        if fit.max_residual <= params.split_threshold {
            out.push((lo, hi));
            continue;
        }
        // The chord passed but the fitted line did not; split at the worst
        // residual, or shave the worse end when that is an endpoint.
        let worst = (lo..=hi)
            .max_by(|&a, &b| fit.line.distance(&points[a]).total_cmp(&fit.line.distance(&points[b])))
            .unwrap_or(lo);
        if worst > lo && worst < hi {
            stack.push((worst, hi));
            stack.push((lo, worst));
        } else if worst == lo {
            stack.push((lo + 1, hi));
        } else {
            stack.push((lo, hi - 1));
        }
    }
}

/// Extracts line segments from points ordered along the sensor's sweep.
/// `point_covs` feeds the segment covariance.
pub fn split_and_merge(points: &[Point2], point_covs: &[Cov2], params: &SplitMergeParams) -> Vec<SegmentObservation> {
    if points.len() < 2 || points.len() != point_covs.len() {
        return Vec::new();
    }
    let mut ranges = Vec::new();
    let mut start = 0;
    for k in 1..=points.len() {
        let gap = k == points.len() || (points[k] - points[k - 1]).norm() > params.max_point_gap;
        if gap {
            if k - start >= 2 {
                split_run(points, start, k - 1, params, &mut ranges);
            }
            start = k;
        }
    }

    // merge collinear neighbours until nothing changes
    let mut merged = true;
    while merged && ranges.len() > 1 {
        merged = false;
        let mut k = 0;
        while k + 1 < ranges.len() {
            let (a, b) = (ranges[k], ranges[k + 1]);
            let contiguous = b.0 <= a.1 + 1 && (points[b.0] - points[a.1]).norm() <= params.max_point_gap;
            if contiguous {
                if let Ok(joint) = fit_line_with_jacobians(&points[a.0..=b.1]) {
                    if joint.max_residual <= params.split_threshold {
                        ranges[k] = (a.0, b.1);
                        ranges.remove(k + 1);
                        merged = true;
                        continue;
                    }
                }
            }
            k += 1;
        }
    }

    ranges
        .into_iter()
        .filter(|(lo, hi)| hi - lo + 1 >= params.min_points)
        .filter_map(|(lo, hi)| {
            let (line, line_cov) = fit_line(&points[lo..=hi], &point_covs[lo..=hi]).ok()?;
            let endpoints = [
                line.point_at(line.project(&points[lo])),
                line.point_at(line.project(&points[hi])),
            ];
            let seg = SegmentObservation {
                line,
                line_cov,
                endpoints,
                indices: (lo..=hi).collect(),
            };
            (seg.length() >= params.min_length).then_some(seg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationParams {
    /// Bound on the summed endpoint-to-line distance (m).
    pub epsilon: f64,
    /// Tolerance added to the interval-overlap test (m).
    pub overlap_slack: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        AssociationParams {
            epsilon: 0.2,
            overlap_slack: 0.0,
        }
    }
}

/// Sum of both endpoint distances to the landmark line and the segment's
/// projected interval on it.
pub fn projection_error(seg_endpoints: &[Point2; 2], line: &PolarLine) -> (f64, (f64, f64)) {
    let t1 = line.project(&seg_endpoints[0]);
    let t2 = line.project(&seg_endpoints[1]);
    let err = (seg_endpoints[0] - line.point_at(t1)).norm() + (seg_endpoints[1] - line.point_at(t2)).norm();
    (err, (t1.min(t2), t1.max(t2)))
}

/// Whether a segment (endpoints in the landmark's frame) passes both the
/// projection-error and interval-overlap tests. Returns the projection error.
pub fn association_error(seg_endpoints: &[Point2; 2], landmark: &Landmark, params: &AssociationParams) -> Option<f64> {
    let (err, (t_lo, t_hi)) = projection_error(seg_endpoints, &landmark.line);
    if err > params.epsilon {
        return None;
    }
    let (s1, s2) = landmark.interval();
    let overlaps = s1.max(t_lo) <= s2.min(t_hi) + params.overlap_slack;
    overlaps.then_some(err)
}

/// Picks the landmark with the smallest projection error among those passing
/// both association tests. `seg` must already be in the global frame.
pub fn associate<'a>(
    seg: &SegmentObservation,
    landmarks: impl IntoIterator<Item = &'a Landmark>,
    params: &AssociationParams,
) -> Option<LandmarkId> {
    let mut best: Option<(f64, LandmarkId)> = None;
    for lm in landmarks {
        if let Some(err) = association_error(&seg.endpoints, lm, params) {
            let better = match best {
                None => true,
                Some((e, id)) => err < e || (err == e && lm.id < id),
            };
            if better {
                best = Some((err, lm.id));
            }
        }
    }
    best.map(|(_, id)| id)
}

/// Recomputes landmark endpoints as the hull of every observation's projected
/// interval. Each observation is given by its endpoints in the observing frame
/// and the current estimate of the observing pose.
pub fn update_endpoints<'a>(
    line: &PolarLine,
    observations: impl IntoIterator<Item = (&'a [Point2; 2], Pose2)>,
) -> Option<[Point2; 2]> {
    let mut s1 = f64::INFINITY;
    let mut s2 = f64::NEG_INFINITY;
    for (endpoints, pose) in observations {
        for p in endpoints {
            let t = line.project(&transform_point(p, &pose));
            s1 = s1.min(t);
            s2 = s2.max(t);
        }
    }
    (s1 <= s2).then(|| [line.point_at(s1), line.point_at(s2)])
}
