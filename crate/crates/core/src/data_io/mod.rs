//! Log ingestion, beam sub-sampling and output formats.

mod carmen;
mod crazyflie;
mod output;

pub use carmen::{parse_carmen_log, write_carmen_log, CarmenOptions};
pub use crazyflie::{parse_crazyflie_csv, write_crazyflie_csv, CRAZYFLIE_BEARINGS};
pub use output::{read_trajectory, write_metrics, write_pgm, write_trajectory, write_trajectory_to, ProbabilityImage};

use log::warn;

use crate::error::Error;
use crate::geometry::{Cov3, MotionDelta, Point2, Pose2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub bearing: f64,
    pub range: f64,
    pub valid: bool,
}

/// One sweep of range readings with the dead-reckoned pose it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub timestamp: f64,
    pub odom_pose: Pose2,
    pub beams: Vec<Beam>,
}

impl Scan {
    /// Builds a scan from `(bearing, range)` pairs; non-finite or
    /// non-positive ranges are marked invalid.
    pub fn from_ranges(timestamp: f64, odom_pose: Pose2, ranges: impl IntoIterator<Item = (f64, f64)>) -> Scan {
        let beams = ranges
            .into_iter()
            .map(|(bearing, range)| Beam {
                bearing,
                range,
                valid: range.is_finite() && range > 0.0,
            })
            .collect();
        Scan {
            timestamp,
            odom_pose,
            beams,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.beams.iter().filter(|b| b.valid).count()
    }

    /// Endpoints of valid beams in the sensor frame, with their bearings.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64, Point2)> + '_ {
        self.beams.iter().enumerate().filter(|(_, b)| b.valid).map(|(i, b)| {
            let (s, c) = b.bearing.sin_cos();
            (i, b.bearing, Point2::new(b.range * c, b.range * s))
        })
    }
}

/// Result of parsing a log: the scans plus per-record problems that were
/// skipped.
#[derive(Debug)]
pub struct ParsedLog {
    pub scans: Vec<Scan>,
    pub warnings: Vec<Error>,
}

/// Beam index kept for slot `k` of `n` out of `total` beams.
fn sparse_index(k: usize, n: usize, total: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (k * total / (n - 1)).min(total - 1)
    }
}

/// Keeps `n` evenly spaced beams (first and last included) and invalidates
/// ranges above `cap`.
pub fn sparsify_scan(scan: &Scan, n: usize, cap: f64) -> Scan {
    assert!(n >= 1, "at least one beam must be kept");
    let total = scan.beams.len();
    let mut beams: Vec<Beam> = if n >= total {
        if n > total {
            warn!("requested {n} beams but scan has {total}; keeping all");
        }
        scan.beams.clone()
    } else {
        (0..n).map(|k| scan.beams[sparse_index(k, n, total)]).collect()
    };
    for b in &mut beams {
        if b.range > cap {
            b.valid = false;
        }
    }
    Scan {
        timestamp: scan.timestamp,
        odom_pose: scan.odom_pose,
        beams,
    }
}

/// Per-step odometry noise `diag((a₁|dx|+a₂)², (a₁|dy|+a₂)², (a₃|dθ|+a₄)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryNoise {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        OdometryNoise {
            a1: 0.1,
            a2: 0.001,
            a3: 0.2,
            a4: 0.001,
        }
    }
}

impl OdometryNoise {
    pub fn covariance(&self, u: &MotionDelta) -> Cov3 {
        let sx = self.a1 * u.dx.abs() + self.a2;
        let sy = self.a1 * u.dy.abs() + self.a2;
        let st = self.a3 * u.dtheta.abs() + self.a4;
        Cov3::from_diagonal(&nalgebra::Vector3::new(sx * sx, sy * sy, st * st))
    }
}
