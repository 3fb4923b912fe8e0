//! Crazyflie multi-ranger CSV: `timestamp,x,y,theta,front,back,left,right`.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use log::warn;

use super::{ParsedLog, Scan};
use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// Bearings of the front, left, back and right rangers.
pub const CRAZYFLIE_BEARINGS: [f64; 4] = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];

fn parse_row(line: &str, lineno: usize) -> Result<Scan> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    if cols.len() != 8 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected 8 columns, found {}", cols.len()),
        });
    }
    let num = |i: usize| -> Result<f64> {
        cols[i].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad number `{}` in column {}", cols[i], i + 1),
        })
    };
    // empty range columns mean "no reading"
    let range = |i: usize| -> Result<f64> {
        if cols[i].is_empty() {
            Ok(f64::NAN)
        } else {
            num(i)
        }
    };
    let pose = Pose2::new(num(1)?, num(2)?, num(3)?);
    let (front, back, left, right) = (range(4)?, range(5)?, range(6)?, range(7)?);
    Ok(Scan::from_ranges(
        num(0)?,
        pose,
        CRAZYFLIE_BEARINGS.into_iter().zip([front, left, back, right]),
    ))
}

/// Parses a Crazyflie CSV log; a non-numeric first line is taken as a header.
pub fn parse_crazyflie_csv(reader: impl BufRead) -> Result<ParsedLog> {
    let mut scans = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if idx == 0 && trimmed.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        match parse_row(trimmed, idx + 1) {
            Ok(s) => scans.push(s),
            Err(e) => {
                warn!("skipping row: {e}");
                warnings.push(e);
            }
        }
    }
    if scans.is_empty() {
        return Err(Error::NoRecords);
    }
    Ok(ParsedLog { scans, warnings })
}

/// Writes scans with the four-ranger layout as CSV rows with a header;
/// invalid readings become empty columns.
pub fn write_crazyflie_csv(scans: &[Scan], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "timestamp,x,y,theta,front,back,left,right")?;
    for s in scans {
        let layout_ok = s.beams.len() == 4
            && s.beams
                .iter()
                .zip(CRAZYFLIE_BEARINGS)
                .all(|(b, t)| (b.bearing - t).abs() < 1e-9);
        if !layout_ok {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("scan at t={} is not a four-ranger scan", s.timestamp),
            ));
        }
        let r = |i: usize| {
            let b = s.beams[i];
            if b.valid {
                b.range.to_string()
            } else {
                String::new()
            }
        };
        let p = s.odom_pose;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.timestamp,
            p.x,
            p.y,
            p.theta,
            r(0),
            r(2),
            r(1),
            r(3)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_map_to_four_beams_in_bearing_order() {
        let text = "timestamp,x,y,theta,front,back,left,right\n\
                    0.1,1.0,2.0,0.5,1.1,2.2,3.3,\n\
                    0.2,1.0,2.0,0.5,1,2,nope,4\n";
        let log = parse_crazyflie_csv(text.as_bytes()).unwrap();
        assert_eq!(log.scans.len(), 1);
        assert_eq!(log.warnings.len(), 1);
        let s = &log.scans[0];
        assert_eq!(s.odom_pose, Pose2::new(1.0, 2.0, 0.5));
        let ranges: Vec<f64> = s.beams.iter().take(3).map(|b| b.range).collect();
        assert_eq!(ranges, vec![1.1, 3.3, 2.2]);
        assert!(!s.beams[3].valid);
        assert!(s.beams.windows(2).all(|w| w[0].bearing < w[1].bearing));
    }

    #[test]
    fn written_logs_parse_back_exactly() {
        let scans = vec![
            Scan::from_ranges(
                0.1,
                Pose2::new(0.5, -1.25, 0.3),
                CRAZYFLIE_BEARINGS.into_iter().zip([1.5, 2.0, f64::NAN, 0.7]),
            ),
            Scan::from_ranges(
                0.2,
                Pose2::new(0.6, -1.2, 0.31),
                CRAZYFLIE_BEARINGS.into_iter().zip([1.0 / 3.0, 2.0, 3.0, 4.0]),
            ),
        ];
        let mut buf = Vec::new();
        write_crazyflie_csv(&scans, &mut buf).unwrap();
        let back = parse_crazyflie_csv(buf.as_slice()).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.scans.len(), 2);
        for (a, b) in scans.iter().zip(&back.scans) {
            assert_eq!((a.timestamp, a.odom_pose), (b.timestamp, b.odom_pose));
            for (x, y) in a.beams.iter().zip(&b.beams) {
                assert_eq!(x.valid, y.valid);
                assert_eq!(x.bearing, y.bearing);
                if x.valid {
                    assert_eq!(x.range, y.range);
                }
            }
        }
        let odd = Scan::from_ranges(0.0, Pose2::default(), [(0.0, 1.0)]);
        assert!(write_crazyflie_csv(&[odd], Vec::new()).is_err());
    }
}
