//! Correlative scan-to-submap search, acceptance thresholding and
//! constraint covariance estimation.

use nalgebra::{Matrix2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Cov3, MotionDelta, Point2, Pose2};
use crate::landmark_graph::PoseId;
use crate::occupancy::Submap;

/// Discretized search space around a predicted alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchWindow {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub linear_step: f64,
    pub angular_step: f64,
}

impl SearchWindow {
    pub fn new(x: f64, y: f64, theta: f64, linear_step: f64, angular_step: f64) -> Result<Self> {
        let w = SearchWindow {
            x,
            y,
            theta,
            linear_step,
            angular_step,
        };
        if !(linear_step > 0.0 && angular_step > 0.0) {
            return Err(Error::Precondition("search steps must be positive".into()));
        }
        if x < linear_step || y < linear_step || theta < angular_step {
            return Err(Error::Precondition(
                "search extents must cover at least one step".into(),
            ));
        }
        Ok(w)
    }

    /// Angular step chosen so the farthest point moves about one cell.
    pub fn for_points(params: &LoopParams, cell_size: f64, points: &[Point2]) -> Result<Self> {
        let radius = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let angular = if radius > cell_size {
            (cell_size / radius).min(params.window_theta)
        } else {
            params.window_theta
        };
        Self::new(
            params.window_xy,
            params.window_xy,
            params.window_theta,
            cell_size,
            angular,
        )
    }

    /// Half-counts `(nx, ny, nθ)` of steps on each side of the centre.
    pub fn half_counts(&self) -> (usize, usize, usize) {
        let n = |extent: f64, step: f64| (extent / step + 1e-9).floor() as usize;
        (
            n(self.x, self.linear_step),
            n(self.y, self.linear_step),
            n(self.theta, self.angular_step),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopParams {
    pub window_xy: f64,
    pub window_theta: f64,
    /// Kernel score a match must exceed.
    pub threshold: f64,
    pub min_points: usize,
}

impl Default for LoopParams {
    fn default() -> Self {
        LoopParams {
            window_xy: 3.0,
            window_theta: 0.35,
            threshold: 0.85,
            min_points: 40,
        }
    }
}

/// Relative pose of `to` (multiscan reference) in the frame of `from`
/// (submap anchor) found by matching.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConstraint {
    pub from: PoseId,
    pub to: PoseId,
    pub delta: MotionDelta,
    /// Covariance of the between-error `delta⁻¹ ⊕ (y_from⁻¹ ⊕ y_to)`.
    pub covariance: Cov3,
    pub score: f64,
}

/// Kernel scores over a search window, stored in lexicographic
/// `(dx, dy, dθ)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    pub window: SearchWindow,
    pub center: Pose2,
    pub scores: Vec<f32>,
}

impl ScoreField {
    fn dims(&self) -> (usize, usize, usize) {
        let (nx, ny, nt) = self.window.half_counts();
        (2 * nx + 1, 2 * ny + 1, 2 * nt + 1)
    }

    /// Integer step offsets of a flat index.
    pub fn steps(&self, idx: usize) -> (i64, i64, i64) {
        let (nx, ny, nt) = self.window.half_counts();
        let (_, sy, st) = self.dims();
        let k = idx % st;
        let j = (idx / st) % sy;
        let i = idx / (st * sy);
        (i as i64 - nx as i64, j as i64 - ny as i64, k as i64 - nt as i64)
    }

    /// Offset `(dx, dy, dθ)` from the centre.
    pub fn offset(&self, idx: usize) -> Vector3<f64> {
        let (i, j, k) = self.steps(idx);
        Vector3::new(
            i as f64 * self.window.linear_step,
            j as f64 * self.window.linear_step,
            k as f64 * self.window.angular_step,
        )
    }

    /// Candidate alignment at a flat index.
    pub fn pose(&self, idx: usize) -> Pose2 {
        let o = self.offset(idx);
        Pose2::new(self.center.x + o.x, self.center.y + o.y, self.center.theta + o.z)
    }

    /// Highest score; ties go to the lexicographically smallest offset.
    pub fn best(&self) -> (usize, f32) {
        let mut best = (0, f32::NEG_INFINITY);
        for (i, &s) in self.scores.iter().enumerate() {
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    }
}

/// Exhaustively scores `points` against a frozen submap for every alignment
/// in the window around `center` (anchor frame), using the kernel grid.
pub fn search(submap: &Submap, points: &[Point2], center: &Pose2, window: &SearchWindow) -> Result<ScoreField> {
    let lookup = submap.lookup().ok_or(Error::NotFrozen)?;
    let g = &submap.grid;
    let (nx, ny, nt) = window.half_counts();
    let (sx, sy, st) = (2 * nx + 1, 2 * ny + 1, 2 * nt + 1);
    let mut scores = vec![0.0f32; sx * sy * st];
    let (w, h) = (g.width as i64, g.height as i64);
    let n = points.len().max(1) as f64;
    let mut cells = Vec::with_capacity(points.len());
    for k in 0..st {
        let theta = center.theta + (k as f64 - nt as f64) * window.angular_step;
        let rot = Pose2::new(center.x, center.y, theta);
        cells.clear();
        cells.extend(points.iter().map(|p| g.cell_of(&rot.transform_point(p))));
        for i in 0..sx {
            let di = i as i64 - nx as i64;
            for j in 0..sy {
                let dj = j as i64 - ny as i64;
                let mut sum = 0.0f64;
                for &(cx, cy) in &cells {
                    let (x, y) = (cx + di, cy + dj);
                    sum += if x >= 0 && y >= 0 && x < w && y < h {
                        lookup.max[(y * w + x) as usize]
                    } else {
                        lookup.unknown_score
                    } as f64;
                }
                scores[(i * sy + j) * st + k] = (sum / n) as f32;
            }
        }
    }
    Ok(ScoreField {
        window: *window,
        center: *center,
        scores,
    })
}

/// Sharpens a kernel-score peak with the raw score. The neighbourhood the
/// kernel can blur is searched at half the window steps, then the winner is
/// polished on successively finer grids. Returns the offset from the centre.
pub fn refine(submap: &Submap, points: &[Point2], field: &ScoreField, idx: usize) -> Result<Vector3<f64>> {
    let lookup = submap.lookup().ok_or(Error::NotFrozen)?;
    let raw = |o: &Vector3<f64>| {
        let pose = Pose2::new(field.center.x + o.x, field.center.y + o.y, field.center.theta + o.z);
        submap.score(points, &pose, false)
    };
    let (nx, ny, nt) = field.window.half_counts();
    let limit = Vector3::new(
        nx as f64 * field.window.linear_step,
        ny as f64 * field.window.linear_step,
        nt as f64 * field.window.angular_step,
    );
    let mut step = Vector3::new(
        field.window.linear_step,
        field.window.linear_step,
        field.window.angular_step,
    ) * 0.5;
    let mut reach = 2 * (lookup.kernel.radius() as i64 + 1);
    let mut best = field.offset(idx);
    let mut best_score = raw(&best)?;
    for _ in 0..3 {
        let origin = best;
        for i in -reach..=reach {
            for j in -reach..=reach {
                for k in -reach..=reach {
                    let o = origin + Vector3::new(i as f64 * step.x, j as f64 * step.y, k as f64 * step.z);
                    if (0..3).any(|a| o[a].abs() > limit[a] + 1e-9) {
                        continue;
                    }
                    let s = raw(&o)?;
                    if s > best_score {
                        best = o;
                        best_score = s;
                    }
                }
            }
        }
        step *= 0.5;
        reach = 2;
    }
    Ok(best)
}

pub const COVARIANCE_FLOOR: f64 = 1e-6;

/// Second moments of the offsets around `w_star`, weighted by the
/// normalized scores. Diagonal entries are floored.
pub fn fit_constraint_covariance(
    samples: impl IntoIterator<Item = (Vector3<f64>, f64)>,
    w_star: &Vector3<f64>,
) -> Cov3 {
    let mut sum = Cov3::zeros();
    let mut total = 0.0;
    for (o, s) in samples {
        if s <= 0.0 {
            continue;
        }
        let mut d = o - w_star;
        d.z = wrap_angle(d.z);
        sum += d * d.transpose() * s;
        total += s;
    }
    let mut cov = if total > 0.0 { sum / total } else { Cov3::zeros() };
    cov = (cov + cov.transpose()) * 0.5;
    for i in 0..3 {
        cov[(i, i)] = cov[(i, i)].max(COVARIANCE_FLOOR);
    }
    cov
}

/// Turns mean-occupancy scores into relative point likelihoods
/// `(s / s*)^n`, treating each of the `n` points as independent evidence.
pub fn likelihood_field(field: &ScoreField, best: f64, n: usize) -> impl Iterator<Item = (Vector3<f64>, f64)> + '_ {
    field.scores.iter().enumerate().map(move |(i, &s)| {
        let l = if s > 0.0 && best > 0.0 {
            (n as f64 * (s as f64 / best).ln()).exp()
        } else {
            0.0
        };
        (field.offset(i), l)
    })
}

/// Searches every candidate submap around the predicted alignment and
/// returns the best match if its score clears the threshold.
/// `candidates` pairs each frozen submap with its anchor's world estimate;
/// `estimate` is the world estimate of the multiscan reference pose.
pub fn detect(
    points: &[Point2],
    reference: PoseId,
    estimate: &Pose2,
    candidates: &[(&Submap, Pose2)],
    params: &LoopParams,
) -> Option<LoopConstraint> {
    if points.len() < params.min_points {
        return None;
    }
    let mut best: Option<(usize, ScoreField, usize, f32)> = None;
    for (c, (submap, anchor)) in candidates.iter().enumerate() {
        if !submap.is_frozen() {
            continue;
        }
        let window = SearchWindow::for_points(params, submap.grid.cell_size, points).ok()?;
        let center = anchor.inverse().compose(&estimate.as_delta());
        let reach = 0.5 * submap.grid.width as f64 * submap.grid.cell_size + params.window_xy;
        if center.translation().norm() > reach + points.iter().map(|p| p.norm()).fold(0.0, f64::max) {
            continue;
        }
        let Ok(field) = search(submap, points, &center, &window) else {
            continue;
        };
        let (idx, score) = field.best();
        if best.as_ref().is_none_or(|b| score > b.3) {
            best = Some((c, field, idx, score));
        }
    }
    let (c, field, top, top_score) = best?;
    let (submap, _) = candidates[c];
    let w_star = refine(submap, points, &field, top).ok()?;
    let w = Pose2::new(
        field.center.x + w_star.x,
        field.center.y + w_star.y,
        field.center.theta + w_star.z,
    );
    let score = submap.score(points, &w, true).ok()?;
    if score <= params.threshold {
        return None;
    }
    let cov = fit_constraint_covariance(likelihood_field(&field, top_score as f64, points.len()), &w_star);
    Some(LoopConstraint {
        from: submap.anchor,
        to: reference,
        delta: w.as_delta(),
        covariance: local_covariance(&cov, w.theta),
        score,
    })
}

/// Re-expresses a covariance of additive `(x, y, θ)` offsets in the body
/// frame of a pose with heading `theta`.
pub fn local_covariance(cov: &Cov3, theta: f64) -> Cov3 {
    let mut j = Cov3::identity();
    let r = Matrix2::new(theta.cos(), theta.sin(), -theta.sin(), theta.cos());
    j.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
    j * cov * j.transpose()
}
