//! Backend pose graph: the frontend chain copied as relative edges plus
//! robustified loop constraints, optimized with Gauss-Newton.

use crate::error::{Error, Result};
use crate::factors::BetweenFactor;
use crate::geometry::{Cov3, MotionDelta, Pose2};
use crate::landmark_graph::{dyn_of, information3, FrontendSnapshot, PoseId};
use crate::loop_closure::LoopConstraint;
use crate::solver::{self, Dcs, Problem, SolveReport, SolverOptions, VarKind};

#[derive(Debug, Clone, PartialEq)]
pub struct BackendParams {
    pub phi: f64,
    pub max_iterations: usize,
}

impl Default for BackendParams {
    fn default() -> Self {
        BackendParams {
            phi: 1.0,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopEdge {
    pub constraint: LoopConstraint,
    /// DCS scale after the most recent optimization.
    pub scale: f64,
}

/// Chain edge from pose `k` to `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainEdge {
    pub measurement: MotionDelta,
    pub covariance: Cov3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph {
    params: BackendParams,
    /// Indexed by pose id.
    poses: Vec<(f64, Pose2)>,
    /// `chain[k]` joins poses `k` and `k + 1`.
    chain: Vec<ChainEdge>,
    loops: Vec<LoopEdge>,
    pending: usize,
    optimized_through: Option<PoseId>,
}

impl PoseGraph {
    pub fn new(params: BackendParams) -> Self {
        PoseGraph {
            params,
            poses: Vec::new(),
            chain: Vec::new(),
            loops: Vec::new(),
            pending: 0,
            optimized_through: None,
        }
    }

    pub fn params(&self) -> &BackendParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Newest copied pose id.
    pub fn frontier(&self) -> Option<PoseId> {
        self.poses.len().checked_sub(1).map(|k| k as PoseId)
    }

    /// Newest pose whose estimate came out of a backend optimization.
    pub fn optimized_through(&self) -> Option<PoseId> {
        self.optimized_through
    }

    pub fn pose(&self, id: PoseId) -> Option<Pose2> {
        self.poses.get(id as usize).map(|p| p.1)
    }

    pub fn chain(&self) -> &[ChainEdge] {
        &self.chain
    }

    pub fn loops(&self) -> &[LoopEdge] {
        &self.loops
    }

    pub fn pending_loops(&self) -> usize {
        self.pending
    }

    /// `(timestamp, estimate)` for every pose, by id.
    pub fn trajectory(&self) -> Vec<(f64, Pose2)> {
        self.poses.clone()
    }

    /// Takes over the frontend's relative motion between consecutive poses.
    /// Poses the backend has already optimized keep their estimates and
    /// edges; later ones are re-chained from the snapshot. Returns the number
    /// of poses appended.
    pub fn copy_state(&mut self, snapshot: &FrontendSnapshot) -> Result<usize> {
        let before = self.poses.len();
        let Some(&(first, t0, x0)) = snapshot.poses.first() else {
            return Ok(0);
        };
        if first as usize > self.poses.len() {
            return Err(Error::Precondition(format!(
                "snapshot starts at pose {first} but the backend ends at {}",
                self.poses.len()
            )));
        }
        if self.poses.is_empty() {
            self.poses.push((t0, x0));
        }
        for (k, pair) in snapshot.poses.windows(2).enumerate() {
            let (prev_id, _, prev) = pair[0];
            let (id, t, x) = pair[1];
            if id != prev_id + 1 {
                return Err(Error::Precondition(format!(
                    "snapshot skips from pose {prev_id} to {id}"
                )));
            }
            let existing = (id as usize) < self.poses.len();
            if existing && self.optimized_through.is_some_and(|o| id <= o) {
                continue;
            }
            let edge = ChainEdge {
                measurement: prev.between(&x),
                covariance: snapshot.edge_covariances[k],
            };
            let estimate = self.poses[prev_id as usize].1.compose(&edge.measurement);
            if existing {
                self.chain[prev_id as usize] = edge;
                self.poses[id as usize] = (t, estimate);
            } else {
                self.chain.push(edge);
                self.poses.push((t, estimate));
            }
        }
        Ok(self.poses.len() - before)
    }

    pub fn add_loop(&mut self, constraint: LoopConstraint) -> Result<()> {
        for id in [constraint.from, constraint.to] {
            if id as usize >= self.poses.len() {
                return Err(Error::UnknownVertex(id));
            }
        }
        self.loops.push(LoopEdge { constraint, scale: 1.0 });
        self.pending += 1;
        Ok(())
    }

    /// `w⁻¹ ⊕ (y_from⁻¹ ⊕ y_to)` for a loop edge.
    pub fn loop_error(&self, index: usize) -> Pose2 {
        let c = &self.loops[index].constraint;
        BetweenFactor { measurement: c.delta }.error(&self.poses[c.from as usize].1, &self.poses[c.to as usize].1)
    }

    fn problem(&self) -> Result<Problem> {
        let mut problem = Problem::new();
        for (k, (_, p)) in self.poses.iter().enumerate() {
            problem.add_variable(VarKind::Pose, p.to_vector().as_slice(), k == 0);
        }
        for (k, e) in self.chain.iter().enumerate() {
            problem.add_residual(
                Box::new(BetweenFactor {
                    measurement: e.measurement,
                }),
                &[k, k + 1],
                dyn_of(&information3(&e.covariance)?),
                None,
            )?;
        }
        for l in &self.loops {
            let c = &l.constraint;
            problem.add_residual(
                Box::new(BetweenFactor { measurement: c.delta }),
                &[c.from as usize, c.to as usize],
                dyn_of(&information3(&c.covariance)?),
                Some(Dcs { phi: self.params.phi }),
            )?;
        }
        Ok(problem)
    }

    /// Robust objective over chain and loop edges.
    pub fn chi2(&self) -> Result<f64> {
        Ok(self.problem()?.chi2())
    }

    /// Gauss-Newton over all poses with the first one fixed. Requires a loop
    /// added since the previous call. Estimates are untouched on failure.
    pub fn optimize(&mut self) -> Result<SolveReport> {
        if self.pending == 0 {
            return Err(Error::Precondition(
                "no loop constraint since the last optimization".into(),
            ));
        }
        let mut problem = self.problem()?;
        let report = solver::solve(&mut problem, &SolverOptions::gauss_newton(self.params.max_iterations))?;
        for (k, pose) in self.poses.iter_mut().enumerate() {
            let v = problem.value(k);
            pose.1 = Pose2::new(v[0], v[1], v[2]);
        }
        for (i, l) in self.loops.iter_mut().enumerate() {
            l.scale = problem.robust_scale(self.chain.len() + i);
        }
        self.pending = 0;
        self.optimized_through = self.frontier();
        Ok(report)
    }
}
