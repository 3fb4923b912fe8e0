//! Relative-displacement trajectory error and runtime accounting.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::geometry::{MotionDelta, Pose2};

/// Ground-truth relative motion between the poses at two timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relation {
    pub t1: f64,
    pub t2: f64,
    pub delta: MotionDelta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
}

impl ErrorStats {
    /// Mean and population standard deviation; `None` for an empty slice.
    pub fn from_samples(samples: &[f64]) -> Option<ErrorStats> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Some(ErrorStats { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationResidual {
    pub t1: f64,
    pub t2: f64,
    pub translation: f64,
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Meters.
    pub translational: ErrorStats,
    /// Degrees.
    pub rotational: Option<ErrorStats>,
    pub residuals: Vec<RelationResidual>,
}

/// Wall-clock accounting of a run, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuntimeStats {
    pub frontend_mean: f64,
    pub frontend_max: f64,
    pub backend_max: f64,
    pub data_interval_mean: f64,
}

/// Reads `t1 t2 dx dy dtheta` lines, or the 3D layout
/// `t1 t2 x y z roll pitch yaw` of published relation files (planar part
/// kept). Blank lines and `#` comments are skipped.
pub fn parse_relations(reader: impl BufRead) -> Result<Vec<Relation>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = t
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("{e}"),
            })?;
        let delta = match vals.len() {
            5 => MotionDelta::new(vals[2], vals[3], vals[4]),
            8 => MotionDelta::new(vals[2], vals[3], vals[7]),
            n => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 5 or 8 fields, found {n}"),
                })
            }
        };
        out.push(Relation {
            t1: vals[0],
            t2: vals[1],
            delta,
        });
    }
    Ok(out)
}

pub fn format_relations(relations: &[Relation]) -> String {
    relations
        .iter()
        .map(|r| {
            format!(
                "{:.6} {:.6} {:.9} {:.9} {:.9}\n",
                r.t1, r.t2, r.delta.dx, r.delta.dy, r.delta.dtheta
            )
        })
        .collect()
}

pub const MATCH_TOLERANCE: f64 = 0.1;

fn nearest(traj: &[(f64, Pose2)], t: f64) -> Option<Pose2> {
    let i = traj.partition_point(|(ts, _)| *ts < t);
    [i.checked_sub(1), Some(i)]
        .into_iter()
        .flatten()
        .filter_map(|k| traj.get(k))
        .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
        .filter(|(ts, _)| (ts - t).abs() <= MATCH_TOLERANCE)
        .map(|(_, p)| *p)
}

/// Compares the trajectory's relative motions against ground-truth relations.
/// Relations whose timestamps have no pose within 0.1 s are ignored.
pub fn evaluate(trajectory: &[(f64, Pose2)], relations: &[Relation]) -> Result<MetricReport> {
    let mut traj = trajectory.to_vec();
    traj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let residuals: Vec<RelationResidual> = relations
        .iter()
        .filter_map(|r| {
            let a = nearest(&traj, r.t1)?;
            let b = nearest(&traj, r.t2)?;
            let err = r.delta.inverse().compose(&a.between(&b));
            Some(RelationResidual {
                t1: r.t1,
                t2: r.t2,
                translation: err.translation_norm(),
                rotation_deg: err.dtheta.abs().to_degrees(),
            })
        })
        .collect();
    let trans: Vec<f64> = residuals.iter().map(|r| r.translation).collect();
    let rot: Vec<f64> = residuals.iter().map(|r| r.rotation_deg).collect();
    let translational = ErrorStats::from_samples(&trans).ok_or(Error::NoRelations)?;
    Ok(MetricReport {
        translational,
        rotational: ErrorStats::from_samples(&rot),
        residuals,
    })
}

/// Relations between the given index pairs of a ground-truth trajectory.
pub fn relations_from_pairs(truth: &[(f64, Pose2)], pairs: &[(usize, usize)]) -> Vec<Relation> {
    pairs
        .iter()
        .map(|&(i, j)| Relation {
            t1: truth[i].0,
            t2: truth[j].0,
            delta: truth[i].1.between(&truth[j].1),
        })
        .collect()
}
