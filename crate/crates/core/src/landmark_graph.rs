//! Frontend graph over per-scan poses and line landmarks.
//!
//! Every scan adds a pose vertex chained to the previous one by an odometry
//! edge. Recent scans are fused into a multiscan in the newest pose's frame,
//! line segments extracted from it become pose-landmark edges, and the graph
//! is re-optimized. A batch of new edges is kept only if the whole graph stays
//! χ²-consistent; otherwise the step is rolled back.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use log::debug;
use nalgebra::{DMatrix, Matrix2, Matrix3};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data_io::{OdometryNoise, Scan};
use crate::error::{Error, Result};
use crate::factors::{BetweenFactor, PoseLineFactor};
use crate::geometry::{
    inverse_delta_covariance, prepend_delta, range_point_covariance, repair_psd3, transformed_point_covariance, Cov2,
    Cov3, MotionDelta, Point2, Pose2,
};
use crate::line_features::{
    associate, split_and_merge, update_endpoints, AssociationParams, Landmark, LandmarkId, PolarLine,
    SegmentObservation, SplitMergeParams,
};
use crate::solver::{self, Factor, Problem, SolverOptions, VarId, VarKind};

pub type PoseId = u64;

/// How multiscan points are ordered before segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrdering {
    /// Each beam's hits over time form their own sequence.
    BeamTrajectory,
    /// Scan by scan, bearing order within a scan.
    Acquisition,
    /// Beam trajectories when every beam contributes enough points,
    /// acquisition order otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendParams {
    pub sigma_d: f64,
    pub odometry_noise: OdometryNoise,
    /// Scans fused into one multiscan, the newest included.
    pub multiscan_scans: usize,
    /// Segments are extracted on every `multiscan_stride`-th scan.
    pub multiscan_stride: usize,
    pub ordering: PointOrdering,
    pub split: SplitMergeParams,
    pub association: AssociationParams,
    pub solver_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Number of most recent poses left free during optimization.
    pub active_window: usize,
    pub confidence: f64,
    /// Count only the edges of the current batch in the consistency test.
    pub batch_only: bool,
    /// Scans retained for building multiscans.
    pub history: usize,
}

impl Default for FrontendParams {
    fn default() -> Self {
        FrontendParams {
            sigma_d: 0.02,
            odometry_noise: OdometryNoise::default(),
            multiscan_scans: 30,
            multiscan_stride: 1,
            ordering: PointOrdering::Auto,
            split: SplitMergeParams::default(),
            association: AssociationParams::default(),
            solver_iterations: 5,
            gradient_tolerance: 1e-9,
            step_tolerance: 1e-9,
            active_window: 60,
            confidence: 0.95,
            batch_only: false,
            history: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseVertex {
    pub id: PoseId,
    pub timestamp: f64,
    pub estimate: Pose2,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryEdge {
    pub from: PoseId,
    pub to: PoseId,
    pub measurement: MotionDelta,
    pub covariance: Cov3,
    information: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkEdge {
    pub pose: PoseId,
    pub landmark: LandmarkId,
    /// Line in the observing pose's frame.
    pub measurement: PolarLine,
    pub covariance: Cov2,
    /// Segment endpoints in the observing pose's frame.
    pub endpoints: [Point2; 2],
    information: Matrix2<f64>,
}

/// Sensor-frame hits of one scan plus the odometry that led to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub pose: PoseId,
    /// Motion from the previous record's pose.
    pub delta: MotionDelta,
    pub delta_cov: Cov3,
    /// `(beam index, bearing, point)`.
    pub points: Vec<(usize, f64, Point2)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiScan {
    pub reference: PoseId,
    pub points: Vec<Point2>,
    pub covs: Vec<Cov2>,
    pub beams: Vec<usize>,
    /// Contributing pose of each point.
    pub sources: Vec<PoseId>,
    /// Contributing poses, oldest first.
    pub poses: Vec<PoseId>,
}

impl MultiScan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Fuses the newest record with its `k` predecessors into the newest pose's
/// frame. Older points travel through the accumulated odometry `u` between
/// their pose and the newest one, and pick up its propagated uncertainty.
pub fn build_multiscan(records: &[ScanRecord], k: usize, sigma_d: f64) -> Option<MultiScan> {
    let (last, _) = records.split_last()?;
    let used = &records[records.len().saturating_sub(k + 1)..];
    let mut ms = MultiScan {
        reference: last.pose,
        points: Vec::new(),
        covs: Vec::new(),
        beams: Vec::new(),
        sources: Vec::new(),
        poses: used.iter().map(|r| r.pose).collect(),
    };
    // walk backwards, prepending each record's delta to the chain
    let mut u = MotionDelta::IDENTITY;
    let mut u_cov = Cov3::zeros();
    let mut per_record = Vec::with_capacity(used.len());
    for (idx, rec) in used.iter().enumerate().rev() {
        let inv = u.inverse();
        let inv_cov = inverse_delta_covariance(&u, &u_cov).unwrap_or(u_cov);
        per_record.push((idx, inv.as_pose(), inv_cov));
        (u, u_cov) = prepend_delta(&rec.delta, &rec.delta_cov, &u, &u_cov);
    }
    per_record.reverse();
    for (idx, transform, cov) in per_record {
        let rec = &used[idx];
        for &(beam, bearing, p) in &rec.points {
            let raw = range_point_covariance(bearing, sigma_d);
            ms.points.push(transform.transform_point(&p));
            ms.covs.push(transformed_point_covariance(&p, &transform, &cov, &raw));
            ms.beams.push(beam);
            ms.sources.push(rec.pose);
        }
    }
    Some(ms)
}

/// Runs split-and-merge on a multiscan in the requested point order. Segment
/// indices refer to multiscan points.
pub fn extract_segments(ms: &MultiScan, ordering: PointOrdering, params: &SplitMergeParams) -> Vec<SegmentObservation> {
    let beams: BTreeSet<usize> = ms.beams.iter().copied().collect();
    let ordering = match ordering {
        PointOrdering::Auto if ms.poses.len() >= 2 * params.min_points => PointOrdering::BeamTrajectory,
        PointOrdering::Auto => PointOrdering::Acquisition,
        o => o,
    };
    let runs: Vec<Vec<usize>> = match ordering {
        PointOrdering::BeamTrajectory => beams
            .iter()
            .map(|&b| (0..ms.len()).filter(|&i| ms.beams[i] == b).collect())
            .collect(),
        _ => vec![(0..ms.len()).collect()],
    };
    let mut out = Vec::new();
    for run in runs {
        let pts: Vec<Point2> = run.iter().map(|&i| ms.points[i]).collect();
        let covs: Vec<Cov2> = run.iter().map(|&i| ms.covs[i]).collect();
        for mut seg in split_and_merge(&pts, &covs, params) {
            seg.indices = seg.indices.iter().map(|&i| run[i]).collect();
            out.push(seg);
        }
    }
    out
}

/// Inverse χ² CDF.
pub fn chi2_quantile(confidence: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .map(|d| d.inverse_cdf(confidence))
        .unwrap_or(f64::INFINITY)
}

/// `F ≤ χ²⁻¹(confidence, n)`.
pub fn check_consistency(f: f64, dof: usize, confidence: f64) -> bool {
    dof >= 1 && f <= chi2_quantile(confidence, dof)
}

/// Saved vertex estimates plus the edge boundary at save time.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    poses: Vec<Pose2>,
    first_pose: PoseId,
    landmarks: BTreeMap<LandmarkId, Landmark>,
    landmark_edges: usize,
    next_landmark: LandmarkId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontendReport {
    pub pose: PoseId,
    pub segments: usize,
    pub associations: usize,
    pub new_landmarks: usize,
    pub optimized: bool,
    pub rolled_back: bool,
    pub chi2: Option<f64>,
    pub dof: usize,
}

/// Immutable export of the pose chain for the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendSnapshot {
    /// `(id, timestamp, estimate)`, ascending ids.
    pub poses: Vec<(PoseId, f64, Pose2)>,
    /// Covariance of the odometry edge ending at each pose but the first.
    pub edge_covariances: Vec<Cov3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkGraph {
    params: FrontendParams,
    poses: VecDeque<PoseVertex>,
    odometry: VecDeque<OdometryEdge>,
    landmarks: BTreeMap<LandmarkId, Landmark>,
    landmark_edges: Vec<LandmarkEdge>,
    history: VecDeque<ScanRecord>,
    next_landmark: LandmarkId,
    last_odom: Option<Pose2>,
}

pub(crate) fn information3(cov: &Cov3) -> Result<Matrix3<f64>> {
    let cov = repair_psd3(cov)?;
    (cov + Matrix3::identity() * 1e-12)
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular covariance".into()))
}

fn information2(cov: &Cov2) -> Matrix2<f64> {
    let sym = (cov + cov.transpose()) * 0.5 + Matrix2::identity() * 1e-12;
    sym.try_inverse().unwrap_or_else(Matrix2::zeros)
}

pub(crate) fn dyn_of<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> DMatrix<f64> {
    DMatrix::from_column_slice(N, N, m.as_slice())
}

impl LandmarkGraph {
    pub fn new(params: FrontendParams) -> Self {
        LandmarkGraph {
            params,
            poses: VecDeque::new(),
            odometry: VecDeque::new(),
            landmarks: BTreeMap::new(),
            landmark_edges: Vec::new(),
            history: VecDeque::new(),
            next_landmark: 0,
            last_odom: None,
        }
    }

    pub fn params(&self) -> &FrontendParams {
        &self.params
    }

    pub fn poses(&self) -> impl Iterator<Item = &PoseVertex> {
        self.poses.iter()
    }

    pub fn pose(&self, id: PoseId) -> Option<&PoseVertex> {
        let first = self.poses.front()?.id;
        id.checked_sub(first).and_then(|i| self.poses.get(i as usize))
    }

    pub fn latest_pose(&self) -> Option<&PoseVertex> {
        self.poses.back()
    }

    pub fn landmarks(&self) -> impl Iterator<Item = &Landmark> {
        self.landmarks.values()
    }

    pub fn odometry_edges(&self) -> impl Iterator<Item = &OdometryEdge> {
        self.odometry.iter()
    }

    pub fn landmark_edges(&self) -> &[LandmarkEdge] {
        &self.landmark_edges
    }

    pub fn scan_history(&self) -> impl Iterator<Item = &ScanRecord> {
        self.history.iter()
    }

    fn pose_mut(&mut self, id: PoseId) -> Option<&mut PoseVertex> {
        let first = self.poses.front()?.id;
        id.checked_sub(first).and_then(move |i| self.poses.get_mut(i as usize))
    }

    /// Appends a pose at `previous ⊕ delta` with an odometry edge. On an empty
    /// graph a fixed origin vertex is created first.
    pub fn add_pose(&mut self, delta: MotionDelta, delta_cov: Cov3, timestamp: f64) -> Result<PoseId> {
        let information = information3(&delta_cov)?;
        if self.poses.is_empty() {
            self.add_origin(timestamp);
        }
        let prev = self.poses.back().expect("origin exists");
        let id = prev.id + 1;
        let estimate = prev.estimate.compose(&delta);
        self.odometry.push_back(OdometryEdge {
            from: prev.id,
            to: id,
            measurement: delta,
            covariance: delta_cov,
            information,
        });
        self.poses.push_back(PoseVertex {
            id,
            timestamp,
            estimate,
            fixed: false,
        });
        Ok(id)
    }

    fn add_origin(&mut self, timestamp: f64) -> PoseId {
        self.poses.push_back(PoseVertex {
            id: 0,
            timestamp,
            estimate: Pose2::IDENTITY,
            fixed: true,
        });
        0
    }

    fn push_history(&mut self, record: ScanRecord) {
        self.history.push_back(record);
        while self.history.len() > self.params.history.max(self.params.multiscan_scans) {
            self.history.pop_front();
        }
    }

    /// Multiscan over the newest `k + 1` stored scans.
    pub fn multiscan(&self, k: usize) -> Option<MultiScan> {
        let records: Vec<ScanRecord> = self.history.iter().cloned().collect();
        build_multiscan(&records, k, self.params.sigma_d)
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            poses: self.poses.iter().map(|p| p.estimate).collect(),
            first_pose: self.poses.front().map_or(0, |p| p.id),
            landmarks: self.landmarks.clone(),
            landmark_edges: self.landmark_edges.len(),
            next_landmark: self.next_landmark,
        }
    }

    /// Drops edges added since the snapshot and restores every estimate saved
    /// in it.
    pub fn rollback(&mut self, snap: &GraphSnapshot) {
        self.landmark_edges.truncate(snap.landmark_edges);
        self.landmarks = snap.landmarks.clone();
        self.next_landmark = snap.next_landmark;
        for (k, est) in snap.poses.iter().enumerate() {
            if let Some(p) = self.pose_mut(snap.first_pose + k as u64) {
                p.estimate = *est;
            }
        }
    }

    fn add_landmark(&mut self, line: PolarLine, endpoints: [Point2; 2]) -> LandmarkId {
        let id = self.next_landmark;
        self.next_landmark += 1;
        self.landmarks.insert(id, Landmark { id, line, endpoints });
        id
    }

    /// Adds a pose-landmark edge from a segment expressed in the pose frame.
    pub fn add_landmark_edge(&mut self, pose: PoseId, landmark: LandmarkId, seg: &SegmentObservation) -> Result<()> {
        if self.pose(pose).is_none() {
            return Err(Error::UnknownVertex(pose));
        }
        if !self.landmarks.contains_key(&landmark) {
            return Err(Error::UnknownVertex(landmark));
        }
        self.landmark_edges.push(LandmarkEdge {
            pose,
            landmark,
            measurement: seg.line,
            covariance: seg.line_cov,
            endpoints: seg.endpoints,
            information: information2(&seg.line_cov),
        });
        Ok(())
    }

    fn odometry_chi2(&self, e: &OdometryEdge) -> f64 {
        let (Some(a), Some(b)) = (self.pose(e.from), self.pose(e.to)) else {
            return 0.0;
        };
        let r = BetweenFactor {
            measurement: e.measurement,
        }
        .error(&a.estimate, &b.estimate)
        .to_vector();
        r.dot(&(e.information * r))
    }

    fn landmark_chi2(&self, e: &LandmarkEdge) -> f64 {
        let (Some(p), Some(l)) = (self.pose(e.pose), self.landmarks.get(&e.landmark)) else {
            return 0.0;
        };
        let x = p.estimate.to_vector();
        let r = PoseLineFactor {
            measurement: e.measurement,
        }
        .residual(&[x.as_slice(), &[l.line.rho, l.line.alpha]]);
        let r = nalgebra::Vector2::new(r[0], r[1]);
        r.dot(&(e.information * r))
    }

    /// `F` summed over every edge and its degrees of freedom
    /// `3·|odometry| + 2·|landmark|`.
    pub fn evaluate_objective(&self) -> (f64, usize) {
        let f_odo: f64 = self.odometry.iter().map(|e| self.odometry_chi2(e)).sum();
        let f_lm: f64 = self.landmark_edges.iter().map(|e| self.landmark_chi2(e)).sum();
        (f_odo + f_lm, 3 * self.odometry.len() + 2 * self.landmark_edges.len())
    }

    fn batch_objective(&self, from_edge: usize) -> (f64, usize) {
        let edges = &self.landmark_edges[from_edge..];
        (edges.iter().map(|e| self.landmark_chi2(e)).sum(), 2 * edges.len())
    }

    /// Optimizes the most recent poses and all landmarks; older poses are held
    /// fixed.
    pub fn optimize(&mut self, max_iterations: usize) -> Result<solver::SolveReport> {
        let Some(latest) = self.poses.back().map(|p| p.id) else {
            return Err(Error::Precondition("graph has no poses".into()));
        };
        let free_from = (latest + 1).saturating_sub(self.params.active_window as u64);
        let mut problem = Problem::new();
        let mut pose_var: BTreeMap<PoseId, VarId> = BTreeMap::new();
        for p in &self.poses {
            let fixed = p.fixed || p.id < free_from;
            pose_var.insert(
                p.id,
                problem.add_variable(VarKind::Pose, p.estimate.to_vector().as_slice(), fixed),
            );
        }
        let mut lm_var: BTreeMap<LandmarkId, VarId> = BTreeMap::new();
        for e in &self.landmark_edges {
            lm_var.entry(e.landmark).or_insert_with(|| {
                let l = &self.landmarks[&e.landmark];
                problem.add_variable(VarKind::Line, &[l.line.rho, l.line.alpha], false)
            });
        }
        for e in &self.odometry {
            let (a, b) = (pose_var[&e.from], pose_var[&e.to]);
            if problem.is_fixed(a) && problem.is_fixed(b) {
                continue;
            }
            problem.add_residual(
                Box::new(BetweenFactor {
                    measurement: e.measurement,
                }),
                &[a, b],
                dyn_of(&e.information),
                None,
            )?;
        }
        for e in &self.landmark_edges {
            problem.add_residual(
                Box::new(PoseLineFactor {
                    measurement: e.measurement,
                }),
                &[pose_var[&e.pose], lm_var[&e.landmark]],
                dyn_of(&e.information),
                None,
            )?;
        }
        let opts = SolverOptions {
            gradient_tolerance: self.params.gradient_tolerance,
            step_tolerance: self.params.step_tolerance,
            ..SolverOptions::levenberg_marquardt(max_iterations)
        };
        let report = solver::solve(&mut problem, &opts)?;
        for (id, var) in &pose_var {
            if !problem.is_fixed(*var) {
                let v = problem.value(*var);
                if let Some(p) = self.pose_mut(*id) {
                    p.estimate = Pose2::new(v[0], v[1], v[2]);
                }
            }
        }
        for (id, var) in &lm_var {
            let v = problem.value(*var);
            if let Some(l) = self.landmarks.get_mut(id) {
                l.line = PolarLine::new(v[0], v[1]);
            }
        }
        Ok(report)
    }

    fn refresh_endpoints(&mut self, ids: &BTreeSet<LandmarkId>) {
        for id in ids {
            let Some(line) = self.landmarks.get(id).map(|l| l.line) else {
                continue;
            };
            let obs: Vec<([Point2; 2], Pose2)> = self
                .landmark_edges
                .iter()
                .filter(|e| e.landmark == *id)
                .filter_map(|e| self.pose(e.pose).map(|p| (e.endpoints, p.estimate)))
                .collect();
            if let Some(ends) = update_endpoints(&line, obs.iter().map(|(e, p)| (e, *p))) {
                if let Some(l) = self.landmarks.get_mut(id) {
                    l.endpoints = ends;
                }
            }
        }
    }

    /// One full frontend update for an incoming scan.
    pub fn process_scan(&mut self, scan: &Scan) -> Result<FrontendReport> {
        let pose = self.ingest_scan(scan)?;
        if pose % self.params.multiscan_stride.max(1) as u64 != 0 {
            return Ok(FrontendReport {
                pose,
                ..Default::default()
            });
        }
        let Some(ms) = self.multiscan(self.params.multiscan_scans.saturating_sub(1)) else {
            return Ok(FrontendReport {
                pose,
                ..Default::default()
            });
        };
        let segments = extract_segments(&ms, self.params.ordering, &self.params.split);
        self.insert_batch(&segments)
    }

    /// Adds the pose for `scan` with its odometry edge and stores the scan
    /// for later multiscans.
    pub fn ingest_scan(&mut self, scan: &Scan) -> Result<PoseId> {
        let (pose, delta, delta_cov) = match self.last_odom {
            None => (self.add_origin(scan.timestamp), MotionDelta::IDENTITY, Cov3::zeros()),
            Some(prev) => {
                let delta = prev.between(&scan.odom_pose);
                let cov = self.params.odometry_noise.covariance(&delta);
                (self.add_pose(delta, cov, scan.timestamp)?, delta, cov)
            }
        };
        self.last_odom = Some(scan.odom_pose);
        self.push_history(ScanRecord {
            pose,
            delta,
            delta_cov,
            points: scan.points().collect(),
        });
        Ok(pose)
    }

    /// Associates segments observed from the newest pose, inserts them as one
    /// batch, optimizes and keeps the batch only if the graph stays
    /// consistent.
    pub fn insert_batch(&mut self, segments: &[SegmentObservation]) -> Result<FrontendReport> {
        let Some(latest) = self.poses.back() else {
            return Err(Error::Precondition("graph has no poses".into()));
        };
        let (pose, x_t) = (latest.id, latest.estimate);
        let mut report = FrontendReport {
            pose,
            segments: segments.len(),
            ..Default::default()
        };
        if segments.is_empty() {
            return Ok(report);
        }

        let snap = self.snapshot();
        let mut touched = BTreeSet::new();
        for seg in segments {
            let global = seg.transformed(&x_t);
            let id = match associate(&global, self.landmarks.values(), &self.params.association) {
                Some(id) => {
                    report.associations += 1;
                    id
                }
                None => {
                    report.new_landmarks += 1;
                    self.add_landmark(global.line, global.endpoints)
                }
            };
            self.add_landmark_edge(pose, id, seg)?;
            touched.insert(id);
        }

        report.optimized = true;
        let solved = self.optimize(self.params.solver_iterations);
        let (f, n) = if self.params.batch_only {
            self.batch_objective(snap.landmark_edges)
        } else {
            self.evaluate_objective()
        };
        report.chi2 = Some(f);
        report.dof = n;
        let consistent = solved.is_ok() && check_consistency(f, n, self.params.confidence);
        if consistent {
            self.refresh_endpoints(&touched);
        } else {
            debug!("pose {pose}: batch rejected (F = {f:.3}, n = {n})");
            self.rollback(&snap);
            report.rolled_back = true;
        }
        Ok(report)
    }

    /// Poses with id ≥ `from` and the covariances of the edges between them.
    pub fn export_since(&self, from: PoseId) -> FrontendSnapshot {
        let poses: Vec<(PoseId, f64, Pose2)> = self
            .poses
            .iter()
            .filter(|p| p.id >= from)
            .map(|p| (p.id, p.timestamp, p.estimate))
            .collect();
        let edge_covariances = self
            .odometry
            .iter()
            .filter(|e| e.from >= from)
            .map(|e| e.covariance)
            .collect();
        FrontendSnapshot {
            poses,
            edge_covariances,
        }
    }

    /// Removes poses older than the newest `keep_recent`, never going past
    /// `copied_through`, together with their edges and any landmark left
    /// without edges. The oldest remaining pose becomes fixed.
    pub fn prune(&mut self, keep_recent: usize, copied_through: PoseId) {
        let Some(latest) = self.poses.back().map(|p| p.id) else {
            return;
        };
        let cut = (latest + 1).saturating_sub(keep_recent as u64).min(copied_through);
        if self.poses.front().is_none_or(|p| p.id >= cut) {
            return;
        }
        while self.poses.front().is_some_and(|p| p.id < cut) {
            self.poses.pop_front();
        }
        while self.odometry.front().is_some_and(|e| e.from < cut) {
            self.odometry.pop_front();
        }
        self.landmark_edges.retain(|e| e.pose >= cut);
        let live: BTreeSet<LandmarkId> = self.landmark_edges.iter().map(|e| e.landmark).collect();
        self.landmarks.retain(|id, _| live.contains(id));
        if let Some(first) = self.poses.front_mut() {
            first.fixed = true;
        }
    }

    /// Plain-text dump: `VERTEX_SE2`, `VERTEX_LINE`, `EDGE_SE2` and
    /// `EDGE_SE2_LINE` lines with upper-triangular information entries.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for p in &self.poses {
            let e = p.estimate;
            let _ = writeln!(s, "VERTEX_SE2 {} {} {} {}", p.id, e.x, e.y, e.theta);
        }
        for l in self.landmarks.values() {
            let _ = writeln!(s, "VERTEX_LINE {} {} {}", l.id, l.line.rho, l.line.alpha);
        }
        for e in &self.odometry {
            let m = e.measurement;
            let i = e.information;
            let _ = writeln!(
                s,
                "EDGE_SE2 {} {} {} {} {} {} {} {} {} {} {}",
                e.from,
                e.to,
                m.dx,
                m.dy,
                m.dtheta,
                i[(0, 0)],
                i[(0, 1)],
                i[(0, 2)],
                i[(1, 1)],
                i[(1, 2)],
                i[(2, 2)]
            );
        }
        for e in &self.landmark_edges {
            let i = e.information;
            let _ = writeln!(
                s,
                "EDGE_SE2_LINE {} {} {} {} {} {} {}",
                e.pose,
                e.landmark,
                e.measurement.rho,
                e.measurement.alpha,
                i[(0, 0)],
                i[(0, 1)],
                i[(1, 1)]
            );
        }
        s
    }
}
