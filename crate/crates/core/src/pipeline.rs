//! End-to-end runs: frontend loop, backend cycles (inline or on a worker
//! thread), map rendering, outputs and parameter sweeps.

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::sync::mpsc::{sync_channel, TryRecvError};
use std::thread;
use std::time::Instant;

use log::{debug, info, warn};

use crate::config::{InputFormat, RunConfig};
use crate::data_io::{
    parse_carmen_log, parse_crazyflie_csv, sparsify_scan, write_metrics, write_pgm, write_trajectory, Scan,
};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};
use crate::landmark_graph::{FrontendSnapshot, LandmarkGraph, PoseId};
use crate::loop_closure::{detect, LoopConstraint, LoopParams};
use crate::metrics::{evaluate, MetricReport, Relation, RuntimeStats};
use crate::occupancy::{render_global, GridParams, Kernel, OccupancyGrid, Submap};
use crate::pose_graph::PoseGraph;
use crate::sim::{simulate, SimConfig, SimulatedLog};

/// Relations drawn for synthetic runs.
pub const SYNTHETIC_RELATIONS: usize = 2000;

pub struct LoadedInput {
    pub scans: Vec<Scan>,
    /// Ground truth, for synthetic input.
    pub truth: Option<SimulatedLog>,
}

/// Simulated square-loop log for the configured beam count and noise.
pub fn synthetic_log(cfg: &RunConfig) -> SimulatedLog {
    let sim = SimConfig {
        odometry_noise: cfg.odometry,
        ..SimConfig::square_loop(cfg.seed).with_ring(cfg.beams)
    };
    simulate(&sim)
}

/// Reads (or simulates) the scans and reduces them to the configured beam
/// count and range cap. Skipped records are logged.
pub fn load_input(cfg: &RunConfig, path: Option<&Path>) -> Result<LoadedInput> {
    let open = |p: &Path| fs::File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));
    let need = || Error::Precondition(format!("{} input needs a log path", cfg.format));
    let (scans, truth) = match cfg.format {
        InputFormat::Synthetic => {
            let log = synthetic_log(cfg);
            (log.scans.clone(), Some(log))
        }
        InputFormat::Carmen => {
            let p = path.ok_or_else(need)?;
            let parsed = parse_carmen_log(open(p)?, &cfg.carmen_options())?;
            for w in &parsed.warnings {
                warn!("{}: {w}", p.display());
            }
            (parsed.scans, None)
        }
        InputFormat::Crazyflie => {
            let p = path.ok_or_else(need)?;
            let parsed = parse_crazyflie_csv(open(p)?)?;
            for w in &parsed.warnings {
                warn!("{}: {w}", p.display());
            }
            (parsed.scans, None)
        }
    };
    if scans.is_empty() {
        return Err(Error::NoRecords);
    }
    let scans = scans
        .iter()
        .map(|s| sparsify_scan(s, cfg.beams, cfg.range_cap))
        .collect();
    Ok(LoadedInput { scans, truth })
}

/// Work handed to the backend: the frontend chain since the last optimized
/// pose and the sensor-frame points of the scans taken since the last hand-over.
#[derive(Debug, Clone)]
pub struct BackendInput {
    pub snapshot: FrontendSnapshot,
    pub scans: Vec<(PoseId, Vec<Point2>)>,
    pub finish: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendStatus {
    pub frontier: Option<PoseId>,
    pub optimized_through: Option<PoseId>,
    pub loops: usize,
    /// Seconds spent in the step.
    pub elapsed: f64,
}

/// A frozen submap and the last pose it contains.
#[derive(Debug, Clone)]
pub struct MapPiece {
    pub submap: Submap,
    pub last: PoseId,
}

/// Loop-closure side of the system: pose graph, submaps and scan store.
pub struct Backend {
    graph: PoseGraph,
    grid: GridParams,
    loop_params: LoopParams,
    kernel: Kernel,
    spacing: f64,
    loop_scans: usize,
    scans: Vec<Vec<Point2>>,
    travel: Vec<f64>,
    pieces: Vec<MapPiece>,
    open_from: PoseId,
    injected: Vec<LoopConstraint>,
    accepted: Vec<LoopConstraint>,
}

impl Backend {
    pub fn new(cfg: &RunConfig) -> Self {
        Backend {
            graph: PoseGraph::new(cfg.backend_params()),
            grid: cfg.grid_params(),
            loop_params: cfg.loop_params(),
            kernel: cfg.kernel,
            spacing: cfg.submap_spacing,
            loop_scans: cfg.loop_scans(),
            scans: Vec::new(),
            travel: Vec::new(),
            pieces: Vec::new(),
            open_from: 0,
            injected: Vec::new(),
            accepted: Vec::new(),
        }
    }

    pub fn graph(&self) -> &PoseGraph {
        &self.graph
    }

    pub fn pieces(&self) -> &[MapPiece] {
        &self.pieces
    }

    /// Loop constraints found by matching.
    pub fn accepted_loops(&self) -> &[LoopConstraint] {
        &self.accepted
    }

    /// Queues an externally supplied loop constraint; it is inserted once both
    /// poses have been copied.
    pub fn inject_loop(&mut self, c: LoopConstraint) {
        self.injected.push(c);
    }

    /// One backend cycle: copy the frontend chain, close submaps, search for
    /// a loop, and optimize when constraints were added.
    pub fn step(&mut self, input: BackendInput) -> Result<BackendStatus> {
        let start = Instant::now();
        for (id, pts) in input.scans {
            let id = id as usize;
            if self.scans.len() <= id {
                self.scans.resize(id + 1, Vec::new());
            }
            self.scans[id] = pts;
        }
        self.graph.copy_state(&input.snapshot)?;
        self.update_travel();
        self.close_submaps(input.finish)?;
        let mut loops = 0;
        if !input.finish {
            if let Some(c) = self.detect_loop() {
                debug!("loop {} -> {} (score {:.3})", c.from, c.to, c.score);
                self.graph.add_loop(c.clone())?;
                self.accepted.push(c);
                loops += 1;
            }
        }
        let frontier = self.graph.frontier().unwrap_or(0);
        let (ready, later): (Vec<_>, Vec<_>) = self
            .injected
            .drain(..)
            .partition(|c| c.from <= frontier && c.to <= frontier);
        self.injected = later;
        for c in ready {
            self.graph.add_loop(c)?;
            loops += 1;
        }
        if self.graph.pending_loops() > 0 {
            match self.graph.optimize() {
                Ok(r) => debug!(
                    "pose graph: {} iterations, chi2 {:.3} -> {:.3}",
                    r.iterations, r.initial_chi2, r.final_chi2
                ),
                Err(e) => warn!("pose graph optimization failed, estimates kept: {e}"),
            }
        }
        Ok(BackendStatus {
            frontier: self.graph.frontier(),
            optimized_through: self.graph.optimized_through(),
            loops,
            elapsed: start.elapsed().as_secs_f64(),
        })
    }

    fn update_travel(&mut self) {
        let chain = self.graph.chain();
        self.travel.clear();
        self.travel.push(0.0);
        for e in chain {
            let last = *self.travel.last().expect("non-empty");
            self.travel.push(last + e.measurement.translation_norm());
        }
    }

    fn estimate(&self, id: PoseId) -> Pose2 {
        self.graph.pose(id).expect("pose copied")
    }

    fn build_submap(&self, from: PoseId, to: PoseId) -> Result<MapPiece> {
        let mut submap = Submap::new(from, &self.grid);
        let anchor = self.estimate(from);
        for id in from..=to {
            let rel = anchor.between(&self.estimate(id)).as_pose();
            let pts = self.scans.get(id as usize).map(Vec::as_slice).unwrap_or(&[]);
            submap.insert_scan(&rel, pts, &self.grid)?;
            if id > from {
                submap.travelled += self.travel[id as usize] - self.travel[id as usize - 1];
            }
        }
        submap.freeze(self.kernel, self.grid.unknown_score)?;
        Ok(MapPiece { submap, last: to })
    }

    fn close_submaps(&mut self, finish: bool) -> Result<()> {
        let Some(frontier) = self.graph.frontier() else {
            return Ok(());
        };
        loop {
            let start = self.open_from;
            let base = self.travel[start as usize];
            let Some(end) = (start + 1..=frontier).find(|&id| self.travel[id as usize] - base >= self.spacing) else {
                break;
            };
            let piece = self.build_submap(start, end)?;
            self.pieces.push(piece);
            self.open_from = end;
        }
        if finish && (self.open_from < frontier || self.pieces.is_empty()) {
            let piece = self.build_submap(self.open_from, frontier)?;
            self.pieces.push(piece);
            self.open_from = frontier;
        }
        Ok(())
    }

    /// Matches the newest loop multiscan against submaps that ended at least
    /// one submap spacing of travel before it.
    fn detect_loop(&self) -> Option<LoopConstraint> {
        let frontier = self.graph.frontier()?;
        let n = self.loop_scans as u64;
        if frontier + 1 < n {
            return None;
        }
        let first = frontier + 1 - n;
        let reference = self.estimate(frontier);
        let inv = reference.inverse();
        let mut points = Vec::new();
        for id in first..=frontier {
            let rel = inv.compose(&self.estimate(id).as_delta());
            if let Some(pts) = self.scans.get(id as usize) {
                points.extend(pts.iter().map(|p| rel.transform_point(p)));
            }
        }
        let reached = self.travel[first as usize];
        let candidates: Vec<(&Submap, Pose2)> = self
            .pieces
            .iter()
            .filter(|p| reached - self.travel[p.last as usize] >= self.spacing)
            .map(|p| (&p.submap, self.estimate(p.submap.anchor)))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        detect(&points, frontier, &reference, &candidates, &self.loop_params)
    }

    /// Composite map of all submaps at their current anchor estimates.
    pub fn render(&self) -> Result<OccupancyGrid> {
        let placed: Vec<(&Submap, Pose2)> = self
            .pieces
            .iter()
            .map(|p| (&p.submap, self.estimate(p.submap.anchor)))
            .collect();
        render_global(&placed, &self.grid)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunSummary {
    pub scans: usize,
    pub rollbacks: usize,
    pub landmarks_created: usize,
    pub loops: usize,
    pub submaps: usize,
}

pub struct RunOutput {
    pub trajectory: Vec<(f64, Pose2)>,
    /// Frontend estimates of every pose at the time it was pruned or the run ended.
    pub frontend_trajectory: Vec<(f64, Pose2)>,
    pub map: OccupancyGrid,
    pub runtime: RuntimeStats,
    pub summary: RunSummary,
    pub loops: Vec<LoopConstraint>,
}

/// Configured run with optional externally injected loop constraints.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: RunConfig,
    injected: Vec<LoopConstraint>,
}

fn scan_points(scan: &Scan) -> Vec<Point2> {
    scan.points().map(|(_, _, p)| p).collect()
}

struct FrontendRun {
    graph: LandmarkGraph,
    times: Vec<f64>,
    summary: RunSummary,
    pending: Vec<(PoseId, Vec<Point2>)>,
    optimized_through: PoseId,
    history: Vec<Option<(f64, Pose2)>>,
    keep: usize,
}

impl FrontendRun {
    fn new(cfg: &RunConfig) -> Self {
        FrontendRun {
            graph: LandmarkGraph::new(cfg.frontend_params()),
            times: Vec::new(),
            summary: RunSummary::default(),
            pending: Vec::new(),
            optimized_through: 0,
            history: Vec::new(),
            keep: cfg.keep_recent(),
        }
    }

    fn process(&mut self, scan: &Scan) -> Result<()> {
        let start = Instant::now();
        let report = self.graph.process_scan(scan)?;
        self.times.push(start.elapsed().as_secs_f64());
        self.summary.scans += 1;
        self.summary.rollbacks += report.rolled_back as usize;
        self.summary.landmarks_created += report.new_landmarks;
        self.pending.push((report.pose, scan_points(scan)));
        Ok(())
    }

    fn handover(&mut self, finish: bool) -> BackendInput {
        BackendInput {
            snapshot: self.graph.export_since(self.optimized_through),
            scans: std::mem::take(&mut self.pending),
            finish,
        }
    }

    fn record_estimates(&mut self) {
        for p in self.graph.poses() {
            let id = p.id as usize;
            if self.history.len() <= id {
                self.history.resize(id + 1, None);
            }
            self.history[id] = Some((p.timestamp, p.estimate));
        }
    }

    fn apply(&mut self, status: &BackendStatus) {
        self.optimized_through = status.optimized_through.unwrap_or(0);
        if let Some(frontier) = status.frontier {
            self.record_estimates();
            self.graph.prune(self.keep, frontier);
        }
    }
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Self {
        Pipeline {
            cfg,
            injected: Vec::new(),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn inject_loop(mut self, c: LoopConstraint) -> Self {
        self.injected.push(c);
        self
    }

    /// Processes every scan in order and returns the optimized trajectory,
    /// the rendered map and timing statistics.
    pub fn run(&self, scans: &[Scan]) -> Result<RunOutput> {
        if scans.is_empty() {
            return Err(Error::NoRecords);
        }
        self.cfg.validate()?;
        let mut backend = Backend::new(&self.cfg);
        for c in &self.injected {
            backend.inject_loop(c.clone());
        }
        let mut fe = FrontendRun::new(&self.cfg);
        let mut backend_times = Vec::new();
        let cadence = self.cfg.loop_scans();
        let backend = if self.cfg.deterministic {
            for scan in scans {
                fe.process(scan)?;
                if fe.pending.len() >= cadence {
                    let status = backend.step(fe.handover(false))?;
                    backend_times.push(status.elapsed);
                    fe.apply(&status);
                }
            }
            let status = backend.step(fe.handover(true))?;
            backend_times.push(status.elapsed);
            backend
        } else {
            let (to_backend, inbox) = sync_channel::<BackendInput>(1);
            let (outbox, from_backend) = sync_channel::<Result<BackendStatus>>(1);
            let worker = thread::spawn(move || {
                for input in inbox {
                    let finish = input.finish;
                    let status = backend.step(input);
                    if outbox.send(status).is_err() || finish {
                        break;
                    }
                }
                backend
            });
            let lost = || Error::Solver("backend thread stopped".into());
            let mut in_flight = false;
            for scan in scans {
                fe.process(scan)?;
                if in_flight {
                    match from_backend.try_recv() {
                        Ok(status) => {
                            let status = status?;
                            backend_times.push(status.elapsed);
                            fe.apply(&status);
                            in_flight = false;
                        }
                        Err(TryRecvError::Empty) => {}
                        Err(TryRecvError::Disconnected) => return Err(lost()),
                    }
                }
                if !in_flight && fe.pending.len() >= cadence {
                    to_backend.send(fe.handover(false)).map_err(|_| lost())?;
                    in_flight = true;
                }
            }
            if in_flight {
                let status = from_backend.recv().map_err(|_| lost())??;
                backend_times.push(status.elapsed);
                fe.apply(&status);
            }
            to_backend.send(fe.handover(true)).map_err(|_| lost())?;
            let status = from_backend.recv().map_err(|_| lost())??;
            backend_times.push(status.elapsed);
            drop(to_backend);
            worker
                .join()
                .map_err(|_| Error::Solver("backend thread panicked".into()))?
        };
        fe.record_estimates();

        let map = backend.render()?;
        let intervals: Vec<f64> = scans.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let runtime = RuntimeStats {
            frontend_mean: mean(&fe.times),
            frontend_max: max(&fe.times),
            backend_max: max(&backend_times),
            data_interval_mean: mean(&intervals),
        };
        let summary = RunSummary {
            loops: backend.accepted_loops().len(),
            submaps: backend.pieces().len(),
            ..fe.summary
        };
        info!(
            "{} scans, {} rollbacks, {} landmarks, {} loops, {} submaps",
            summary.scans, summary.rollbacks, summary.landmarks_created, summary.loops, summary.submaps
        );
        Ok(RunOutput {
            trajectory: backend.graph().trajectory(),
            frontend_trajectory: fe.history.into_iter().flatten().collect(),
            map,
            runtime,
            summary,
            loops: backend.accepted_loops().to_vec(),
        })
    }
}

pub fn run(cfg: &RunConfig, scans: &[Scan]) -> Result<RunOutput> {
    Pipeline::new(cfg.clone()).run(scans)
}

/// Writes `trajectory.txt`, `map.pgm` and `metrics.txt` into `dir`.
pub fn write_outputs(out: &RunOutput, metrics: Option<&MetricReport>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trajectory(&out.trajectory, &dir.join("trajectory.txt"))?;
    let map = dir.join("map.pgm");
    fs::write(&map, write_pgm(&out.map.to_image())).map_err(|e| Error::io(&map, e))?;
    let m = dir.join("metrics.txt");
    fs::write(&m, write_metrics(metrics, Some(&out.runtime))).map_err(|e| Error::io(&m, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Kernel,
    Multiscan,
    Beams,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Kernel => "kernel",
            SweepAxis::Multiscan => "multiscan",
            SweepAxis::Beams => "beams",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel" => Ok(SweepAxis::Kernel),
            "multiscan" => Ok(SweepAxis::Multiscan),
            "beams" => Ok(SweepAxis::Beams),
            other => Err(Error::Config {
                key: "axis".into(),
                message: format!("unknown sweep axis `{other}` (kernel, multiscan, beams)"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub result: std::result::Result<(MetricReport, RuntimeStats), String>,
}

/// One run per value along `axis`. Without a relation list, synthetic
/// input is scored against relations drawn from its ground truth.
pub fn sweep(
    template: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    log: Option<&Path>,
    relations: Option<&[Relation]>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Precondition("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let result = (|| {
            let mut cfg = template.clone();
            cfg.set(axis.key(), value)?;
            cfg.validate()?;
            let input = load_input(&cfg, log)?;
            let out = run(&cfg, &input.scans)?;
            let drawn;
            let rel = match (relations, &input.truth) {
                (Some(r), _) => r,
                (None, Some(truth)) => {
                    drawn = truth.random_relations(SYNTHETIC_RELATIONS, cfg.seed);
                    &drawn
                }
                (None, None) => return Err(Error::NoRelations),
            };
            Ok((evaluate(&out.trajectory, rel)?, out.runtime))
        })();
        if let Err(e) = &result {
            warn!("sweep {}={value} failed: {e}", axis.key());
        }
        rows.push(SweepRow {
            value: value.clone(),
            result: result.map_err(|e: Error| e.to_string()),
        });
    }
    Ok(rows)
}

/// Tab-separated sweep table.
pub fn format_sweep(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{}\ttrans_mean\ttrans_std\trot_mean\trot_std\tfrontend_mean\n",
        axis.key()
    );
    for row in rows {
        match &row.result {
            Ok((m, rt)) => {
                let rot = m
                    .rotational
                    .unwrap_or(crate::metrics::ErrorStats { mean: 0.0, std: 0.0 });
                s += &format!(
                    "{}\t{:.4}\t{:.4}\t{:.3}\t{:.3}\t{:.6}\n",
                    row.value, m.translational.mean, m.translational.std, rot.mean, rot.std, rt.frontend_mean
                );
            }
            Err(e) => s += &format!("{}\tfailed: {e}\n", row.value),
        }
    }
    s
}
