//! Run configuration: defaults, `key = value` files and overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data_io::{CarmenOptions, OdometryNoise};
use crate::error::{Error, Result};
use crate::landmark_graph::FrontendParams;
use crate::loop_closure::LoopParams;
use crate::occupancy::{GridParams, Kernel};
use crate::pose_graph::BackendParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Carmen,
    Crazyflie,
    /// Built-in square-loop simulation.
    Synthetic,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carmen" => Ok(InputFormat::Carmen),
            "crazyflie" => Ok(InputFormat::Crazyflie),
            "synthetic" => Ok(InputFormat::Synthetic),
            other => Err(Error::Config {
                key: "format".into(),
                message: format!("unknown format `{other}` (carmen, crazyflie, synthetic)"),
            }),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Carmen => "carmen",
            InputFormat::Crazyflie => "crazyflie",
            InputFormat::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub format: InputFormat,
    /// Beams kept per scan.
    pub beams: usize,
    /// Readings beyond this range (m) are discarded.
    pub range_cap: f64,
    /// Multiscan size in points.
    pub multiscan: usize,
    /// Segments are extracted on every `multiscan_stride`-th scan.
    pub multiscan_stride: usize,
    /// Loop-closure multiscan size in points.
    pub loop_multiscan: usize,
    pub cell_size: f64,
    pub kernel: Kernel,
    pub deterministic: bool,
    /// Travel (m) covered by one submap.
    pub submap_spacing: f64,
    pub submap_extent: f64,
    pub window_xy: f64,
    pub window_theta: f64,
    pub loop_threshold: f64,
    pub loop_min_points: usize,
    pub unknown_score: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    pub dcs_phi: f64,
    pub backend_iterations: usize,
    pub frontend_iterations: usize,
    pub confidence: f64,
    pub batch_only: bool,
    /// Poses kept by frontend pruning; two multiscan windows when unset.
    pub keep_recent: Option<usize>,
    pub sigma_d: f64,
    pub odometry: OdometryNoise,
    pub flaser_fov: f64,
    /// Seed of the synthetic log.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format: InputFormat::Carmen,
            beams: 4,
            range_cap: 5.0,
            multiscan: 120,
            multiscan_stride: 1,
            loop_multiscan: 120,
            cell_size: 0.1,
            kernel: Kernel::K3,
            deterministic: false,
            submap_spacing: 5.0,
            submap_extent: 20.0,
            window_xy: 3.0,
            window_theta: 0.35,
            loop_threshold: 0.85,
            loop_min_points: 40,
            unknown_score: 0.3,
            p_hit: 0.85,
            p_miss: 0.4,
            dcs_phi: 1.0,
            backend_iterations: 50,
            frontend_iterations: 5,
            confidence: 0.95,
            batch_only: false,
            keep_recent: None,
            sigma_d: 0.02,
            odometry: OdometryNoise::default(),
            flaser_fov: std::f64::consts::PI,
            seed: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config {
        key: key.into(),
        message: format!("invalid value `{value}`: {e}"),
    })
}

impl RunConfig {
    /// Sets one option by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "format" => self.format = v.parse()?,
            "beams" => self.beams = parse(key, v)?,
            "range_cap" => self.range_cap = parse(key, v)?,
            "multiscan" => self.multiscan = parse(key, v)?,
            "multiscan_stride" => self.multiscan_stride = parse(key, v)?,
            "loop_multiscan" => self.loop_multiscan = parse(key, v)?,
            "cell_size" => self.cell_size = parse(key, v)?,
            "kernel" => self.kernel = v.parse()?,
            "deterministic" => self.deterministic = parse(key, v)?,
            "submap_spacing" => self.submap_spacing = parse(key, v)?,
            "submap_extent" => self.submap_extent = parse(key, v)?,
            "window_xy" => self.window_xy = parse(key, v)?,
            "window_theta" => self.window_theta = parse(key, v)?,
            "loop_threshold" => self.loop_threshold = parse(key, v)?,
            "loop_min_points" => self.loop_min_points = parse(key, v)?,
            "unknown_score" => self.unknown_score = parse(key, v)?,
            "p_hit" => self.p_hit = parse(key, v)?,
            "p_miss" => self.p_miss = parse(key, v)?,
            "dcs_phi" => self.dcs_phi = parse(key, v)?,
            "backend_iterations" => self.backend_iterations = parse(key, v)?,
            "frontend_iterations" => self.frontend_iterations = parse(key, v)?,
            "confidence" => self.confidence = parse(key, v)?,
            "batch_only" => self.batch_only = parse(key, v)?,
            "keep_recent" => self.keep_recent = Some(parse(key, v)?),
            "sigma_d" => self.sigma_d = parse(key, v)?,
            "odometry_a1" => self.odometry.a1 = parse(key, v)?,
            "odometry_a2" => self.odometry.a2 = parse(key, v)?,
            "odometry_a3" => self.odometry.a3 = parse(key, v)?,
            "odometry_a4" => self.odometry.a4 = parse(key, v)?,
            "flaser_fov" => self.flaser_fov = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            other => {
                return Err(Error::Config {
                    key: other.into(),
                    message: "unknown option".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: key.into(),
                    message: message.into(),
                })
            }
        };
        check(self.beams >= 1, "beams", "must be at least 1")?;
        check(self.range_cap > 0.0, "range_cap", "must be positive")?;
        check(self.multiscan >= 1, "multiscan", "must be at least 1")?;
        check(self.multiscan_stride >= 1, "multiscan_stride", "must be at least 1")?;
        check(self.loop_multiscan >= 1, "loop_multiscan", "must be at least 1")?;
        check(self.cell_size > 0.0, "cell_size", "must be positive")?;
        check(self.submap_spacing > 0.0, "submap_spacing", "must be positive")?;
        check(
            self.submap_extent > self.cell_size,
            "submap_extent",
            "must exceed the cell size",
        )?;
        check(self.window_xy >= self.cell_size, "window_xy", "must cover one cell")?;
        check(self.window_theta > 0.0, "window_theta", "must be positive")?;
        check(
            (0.0..1.0).contains(&self.loop_threshold),
            "loop_threshold",
            "must lie in [0, 1)",
        )?;
        check(self.p_hit > 0.5 && self.p_hit < 1.0, "p_hit", "must lie in (0.5, 1)")?;
        check(self.p_miss > 0.0 && self.p_miss < 0.5, "p_miss", "must lie in (0, 0.5)")?;
        check(self.dcs_phi > 0.0, "dcs_phi", "must be positive")?;
        check(
            self.confidence > 0.0 && self.confidence < 1.0,
            "confidence",
            "must lie in (0, 1)",
        )?;
        check(self.sigma_d > 0.0, "sigma_d", "must be positive")?;
        Ok(())
    }

    fn scans_for(points: usize, beams: usize) -> usize {
        ((points as f64 / beams.max(1) as f64).round() as usize).max(1)
    }

    /// Scans per frontend multiscan.
    pub fn multiscan_scans(&self) -> usize {
        Self::scans_for(self.multiscan, self.beams)
    }

    /// Scans per loop-closure multiscan; also the backend cadence.
    pub fn loop_scans(&self) -> usize {
        Self::scans_for(self.loop_multiscan, self.beams)
    }

    pub fn keep_recent(&self) -> usize {
        self.keep_recent.unwrap_or(2 * self.multiscan_scans())
    }

    pub fn frontend_params(&self) -> FrontendParams {
        let k = self.multiscan_scans();
        FrontendParams {
            sigma_d: self.sigma_d,
            odometry_noise: self.odometry,
            multiscan_scans: k,
            multiscan_stride: self.multiscan_stride,
            solver_iterations: self.frontend_iterations,
            confidence: self.confidence,
            batch_only: self.batch_only,
            active_window: 2 * k,
            history: k,
            ..FrontendParams::default()
        }
    }

    pub fn grid_params(&self) -> GridParams {
        GridParams {
            cell_size: self.cell_size,
            extent: self.submap_extent,
            p_hit: self.p_hit,
            p_miss: self.p_miss,
            unknown_score: self.unknown_score,
            ..GridParams::default()
        }
    }

    pub fn loop_params(&self) -> LoopParams {
        LoopParams {
            window_xy: self.window_xy,
            window_theta: self.window_theta,
            threshold: self.loop_threshold,
            min_points: self.loop_min_points,
        }
    }

    pub fn backend_params(&self) -> BackendParams {
        BackendParams {
            phi: self.dcs_phi,
            max_iterations: self.backend_iterations,
        }
    }

    pub fn carmen_options(&self) -> CarmenOptions {
        CarmenOptions {
            flaser_fov: self.flaser_fov,
        }
    }
}
