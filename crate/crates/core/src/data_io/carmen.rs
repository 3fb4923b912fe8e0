//! CARMEN text logs (`FLASER` and `ROBOTLASER1` records).

use std::io::{BufRead, Write};

use log::warn;

use super::{ParsedLog, Scan};
use crate::error::{Error, Result};
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarmenOptions {
    /// Field of view assumed for `FLASER` records, which do not carry one.
    pub flaser_fov: f64,
}

impl Default for CarmenOptions {
    fn default() -> Self {
        CarmenOptions {
            flaser_fov: std::f64::consts::PI,
        }
    }
}

struct Fields<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
    line: usize,
}

impl<'a> Fields<'a> {
    fn next_str(&mut self, what: &str) -> Result<&'a str> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| Error::Parse {
            line: self.line,
            message: format!("missing {what}"),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let t = self.next_str(what)?;
        t.parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("bad {what} `{t}`"),
        })
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let t = self.next_str(what)?;
        t.parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("bad {what} `{t}`"),
        })
    }

    fn skip(&mut self, n: usize, what: &str) -> Result<()> {
        if self.pos + n > self.tokens.len() {
            return Err(Error::Parse {
                line: self.line,
                message: format!("missing {what}"),
            });
        }
        self.pos += n;
        Ok(())
    }

    fn pose(&mut self, what: &str) -> Result<Pose2> {
        Ok(Pose2::new(self.f64(what)?, self.f64(what)?, self.f64(what)?))
    }
}

fn bearings(start: f64, step: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| start + step * k as f64)
}

// FLASER n r1..rn x y theta odom_x odom_y odom_theta timestamp host logger_timestamp
fn parse_flaser(f: &mut Fields, opts: &CarmenOptions) -> Result<Scan> {
    let n = f.count("reading count")?;
    let ranges = (0..n).map(|_| f.f64("range")).collect::<Result<Vec<_>>>()?;
    let _laser = f.pose("laser pose")?;
    let odom = f.pose("odometry pose")?;
    let timestamp = f.f64("timestamp")?;
    let step = if n > 1 { opts.flaser_fov / (n - 1) as f64 } else { 0.0 };
    let b = bearings(-opts.flaser_fov / 2.0, step, n);
    Ok(Scan::from_ranges(timestamp, odom, b.zip(ranges)))
}

// ROBOTLASER1 type start fov res max_range accuracy remission_mode n r1..rn
//   m rem1..remm laser_pose(3) robot_pose(3) tv rv fwd_safety side_safety turn_axis
//   timestamp host logger_timestamp
fn parse_robotlaser(f: &mut Fields) -> Result<Scan> {
    f.skip(1, "laser type")?;
    let start = f.f64("start angle")?;
    let _fov = f.f64("field of view")?;
    let res = f.f64("angular resolution")?;
    let max_range = f.f64("maximum range")?;
    f.skip(2, "accuracy and remission mode")?;
    let n = f.count("reading count")?;
    let ranges = (0..n).map(|_| f.f64("range")).collect::<Result<Vec<_>>>()?;
    let m = f.count("remission count")?;
    f.skip(m, "remissions")?;
    let _laser = f.pose("laser pose")?;
    let robot = f.pose("robot pose")?;
    f.skip(5, "velocities and safety distances")?;
    let timestamp = f.f64("timestamp")?;
    let mut scan = Scan::from_ranges(timestamp, robot, bearings(start, res, n).zip(ranges));
    for b in &mut scan.beams {
        if b.range >= max_range {
            b.valid = false;
        }
    }
    Ok(scan)
}

/// Parses a CARMEN log. Malformed records are reported in
/// [`ParsedLog::warnings`] and skipped; a log without any usable record is an
/// error.
pub fn parse_carmen_log(reader: impl BufRead, opts: &CarmenOptions) -> Result<ParsedLog> {
    let mut scans = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some(&tag) = tokens.first() else { continue };
        let mut fields = Fields {
            tokens,
            pos: 1,
            line: idx + 1,
        };
        let parsed = match tag {
            "FLASER" => parse_flaser(&mut fields, opts),
            "ROBOTLASER1" => parse_robotlaser(&mut fields),
            _ => continue,
        };
        match parsed {
            Ok(scan) => scans.push(scan),
            Err(e) => {
                warn!("skipping record: {e}");
                warnings.push(e);
            }
        }
    }
    if scans.is_empty() {
        return Err(Error::NoRecords);
    }
    Ok(ParsedLog { scans, warnings })
}

/// Writes scans as `FLASER` records. Bearings are not stored, so they must
/// follow the uniform layout the parser synthesizes.
pub fn write_carmen_log(scans: &[Scan], mut out: impl Write) -> std::io::Result<()> {
    for s in scans {
        write!(out, "FLASER {}", s.beams.len())?;
        for b in &s.beams {
            write!(out, " {}", b.range)?;
        }
        let p = s.odom_pose;
        writeln!(
            out,
            " {x} {y} {t} {x} {y} {t} {ts} sparse-slam {ts}",
            x = p.x,
            y = p.y,
            t = p.theta,
            ts = s.timestamp
        )?;
    }
    Ok(())
}
