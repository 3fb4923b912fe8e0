//! Map, trajectory and metrics writers.

use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::metrics::{MetricReport, RuntimeStats};

/// Occupancy probabilities in image order: row 0 is the northern edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityImage {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Option<f64>>,
}

/// Binary PGM: occupied 0, free 255, unknown 128.
pub fn write_pgm(image: &ProbabilityImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.cells.iter().map(|c| match c {
        Some(p) => (255.0 * (1.0 - p.clamp(0.0, 1.0))).round() as u8,
        None => 128,
    }));
    out
}

pub fn write_trajectory_to(poses: &[(f64, Pose2)], out: impl Write) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for (t, p) in poses {
        writeln!(out, "{t:.6} {:.6} {:.6} {:.6}", p.x, p.y, p.theta)?;
    }
    out.flush()
}

/// Writes `timestamp x y theta` lines with six decimals.
pub fn write_trajectory(poses: &[(f64, Pose2)], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory_to(poses, file).map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(reader: impl BufRead) -> Result<Vec<(f64, Pose2)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("{e}"),
            })?;
        if vals.len() != 4 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 4 fields, found {}", vals.len()),
            });
        }
        out.push((vals[0], Pose2::new(vals[1], vals[2], vals[3])));
    }
    Ok(out)
}

/// Key-value metrics text. Sections that are absent are omitted.
pub fn write_metrics(report: Option<&MetricReport>, runtime: Option<&RuntimeStats>) -> Vec<u8> {
    let mut s = String::new();
    if let Some(r) = report {
        let _ = writeln!(s, "relations {}", r.residuals.len());
        let _ = writeln!(s, "abs_trans_mean {:?}", r.translational.mean);
        let _ = writeln!(s, "abs_trans_std {:?}", r.translational.std);
        if let Some(rot) = r.rotational {
            let _ = writeln!(s, "abs_rot_mean {:?}", rot.mean);
            let _ = writeln!(s, "abs_rot_std {:?}", rot.std);
        }
    }
    if let Some(rt) = runtime {
        let _ = writeln!(s, "frontend_mean {:?}", rt.frontend_mean);
        let _ = writeln!(s, "frontend_max {:?}", rt.frontend_max);
        let _ = writeln!(s, "backend_max {:?}", rt.backend_max);
        let _ = writeln!(s, "data_interval_mean {:?}", rt.data_interval_mean);
    }
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ErrorStats;

    #[test]
    fn pgm_bytes() {
        let img = ProbabilityImage {
            width: 1,
            height: 1,
            cells: vec![None],
        };
        assert_eq!(write_pgm(&img), b"P5\n1 1\n255\n\x80".to_vec());
        let img = ProbabilityImage {
            width: 3,
            height: 2,
            cells: vec![Some(1.0), Some(0.0), Some(0.5), None, Some(0.25), Some(0.8)],
        };
        let bytes = write_pgm(&img);
        let header = b"P5\n3 2\n255\n".len();
        assert_eq!(bytes.len(), header + 6);
        assert_eq!(&bytes[header..], &[0, 255, 128, 128, 191, 51]);
    }

    #[test]
    fn trajectory_format_and_round_trip() {
        let mut buf = Vec::new();
        write_trajectory_to(&[(0.0, Pose2::new(1.0, 2.0, 0.3))], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0.000000 1.000000 2.000000 0.300000\n");

        let mut buf = Vec::new();
        write_trajectory_to(&[], &mut buf).unwrap();
        assert!(buf.is_empty());

        let poses: Vec<(f64, Pose2)> = (0..50)
            .map(|k| {
                (
                    k as f64 * 0.1337,
                    Pose2::new(k as f64 * 1.234567, -0.5 * k as f64, 0.06 * k as f64),
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        write_trajectory(&poses, &path).unwrap();
        let back = read_trajectory(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
        for ((ta, a), (tb, b)) in back.iter().zip(&poses) {
            assert!((ta - tb).abs() <= 5e-7);
            assert!((a.x - b.x).abs() <= 5e-7 && (a.y - b.y).abs() <= 5e-7);
            assert!((a.theta - b.theta).abs() <= 5e-7);
        }
    }

    fn report(mean: f64, std: f64, rot: Option<ErrorStats>) -> MetricReport {
        MetricReport {
            translational: ErrorStats { mean, std },
            rotational: rot,
            residuals: Vec::new(),
        }
    }

    #[test]
    fn metrics_text() {
        let text = String::from_utf8(write_metrics(Some(&report(0.0, 0.0, None)), None)).unwrap();
        assert!(text.contains("abs_trans_mean 0.0\n"));
        assert!(!text.contains("abs_rot"));
        let intel = report(
            0.0848,
            0.1151,
            Some(ErrorStats {
                mean: 2.319,
                std: 2.371,
            }),
        );
        let text = String::from_utf8(write_metrics(Some(&intel), Some(&RuntimeStats::default()))).unwrap();
        assert!(text.contains("abs_trans_mean 0.0848\n"));
        assert!(text.contains("abs_rot_std 2.371\n"));
        assert!(text.contains("backend_max 0.0\n"));
    }
}
