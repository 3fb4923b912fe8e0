//! Synthetic worlds and simulated sparse range logs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_io::{OdometryNoise, Scan, CRAZYFLIE_BEARINGS};
use crate::geometry::{MotionDelta, Point2, Pose2};
use crate::metrics::{relations_from_pairs, Relation};

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub walls: Vec<[Point2; 2]>,
}

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

fn polyline(points: &[(f64, f64)]) -> Vec<[Point2; 2]> {
    points
        .windows(2)
        .map(|w| [p(w[0].0, w[0].1), p(w[1].0, w[1].1)])
        .collect()
}

impl World {
    /// Square corridor loop around a solid block. The centreline is the
    /// square `(0,0)–(10,10)` (40 m), the corridor is 2 m wide and two alcoves
    /// on the outer wall break the symmetry.
    pub fn square_loop() -> World {
        let mut walls = polyline(&[
            (-1.0, -1.0),
            (3.0, -1.0),
            (3.0, -1.6),
            (4.2, -1.6),
            (4.2, -1.0),
            (11.0, -1.0),
            (11.0, 6.0),
            (11.8, 6.0),
            (11.8, 7.0),
            (11.0, 7.0),
            (11.0, 11.0),
            (-1.0, 11.0),
            (-1.0, -1.0),
        ]);
        walls.extend(polyline(&[(1.0, 1.0), (9.0, 1.0), (9.0, 9.0), (1.0, 9.0), (1.0, 1.0)]));
        World { walls }
    }

    /// Closed rectangular room with a dividing stub wall.
    pub fn room(width: f64, height: f64) -> World {
        let mut walls = polyline(&[(0.0, 0.0), (width, 0.0), (width, height), (0.0, height), (0.0, 0.0)]);
        walls.push([p(width * 0.5, 0.0), p(width * 0.5, height * 0.4)]);
        World { walls }
    }

    /// Distance along the ray to the nearest wall, if any within `max_range`.
    pub fn raycast(&self, origin: &Point2, bearing: f64, max_range: f64) -> Option<f64> {
        let d = Point2::new(bearing.cos(), bearing.sin());
        let mut best: Option<f64> = None;
        for [a, b] in &self.walls {
            let e = b - a;
            let denom = d.x * e.y - d.y * e.x;
            if denom.abs() < 1e-12 {
                continue;
            }
            let w = a - origin;
            let t = (w.x * e.y - w.y * e.x) / denom;
            let s = (w.x * d.y - w.y * d.x) / denom;
            if t > 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&s) && t <= max_range {
                best = Some(best.map_or(t, |bt: f64| bt.min(t)));
            }
        }
        best
    }

    pub fn distance_to_walls(&self, q: &Point2) -> f64 {
        self.walls
            .iter()
            .map(|[a, b]| {
                let e = b - a;
                let t = ((q - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                (q - (a + e * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Closed path of straight legs joined by in-place turns.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub world: World,
    pub waypoints: Vec<Point2>,
    pub laps: f64,
    pub speed: f64,
    pub turn_rate: f64,
    pub rate_hz: f64,
    pub bearings: Vec<f64>,
    pub range_noise: f64,
    pub max_range: f64,
    pub odometry_noise: OdometryNoise,
    /// Multiplicative bias applied to the odometry rotation increments.
    pub rotation_bias: f64,
    pub seed: u64,
}

impl SimConfig {
    /// 40 m square loop with the four-ranger layout at 10 Hz.
    pub fn square_loop(seed: u64) -> SimConfig {
        SimConfig {
            world: World::square_loop(),
            waypoints: vec![p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)],
            laps: 1.25,
            speed: 0.5,
            turn_rate: 0.5,
            rate_hz: 10.0,
            bearings: CRAZYFLIE_BEARINGS.to_vec(),
            range_noise: 0.02,
            max_range: 30.0,
            odometry_noise: OdometryNoise::default(),
            rotation_bias: 0.0,
            seed,
        }
    }

    /// Same loop with a planar scanner of `count` beams over `fov`.
    pub fn with_scanner(mut self, count: usize, fov: f64) -> SimConfig {
        let step = if count > 1 { fov / (count - 1) as f64 } else { 0.0 };
        self.bearings = (0..count).map(|k| -fov / 2.0 + step * k as f64).collect();
        self
    }

    /// `count` beams evenly spread over the full circle, the first facing
    /// forward. Four beams reproduce the four-ranger layout.
    pub fn with_ring(mut self, count: usize) -> SimConfig {
        self.bearings = (0..count)
            .map(|k| k as f64 * std::f64::consts::TAU / count as f64)
            .collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLog {
    pub scans: Vec<Scan>,
    pub truth: Vec<(f64, Pose2)>,
    /// True world-frame endpoints of every valid beam.
    pub hits: Vec<Point2>,
}

impl SimulatedLog {
    pub fn dead_reckoning(&self) -> Vec<(f64, Pose2)> {
        self.scans.iter().map(|s| (s.timestamp, s.odom_pose)).collect()
    }

    /// Ground-truth relations between `count` random pose pairs.
    pub fn random_relations(&self, count: usize, seed: u64) -> Vec<Relation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.truth.len();
        let pairs: Vec<(usize, usize)> = (0..count)
            .map(|_| {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                (i.min(j), i.max(j))
            })
            .filter(|(i, j)| i != j)
            .collect();
        relations_from_pairs(&self.truth, &pairs)
    }
}

fn true_path(cfg: &SimConfig) -> Vec<Pose2> {
    let step = cfg.speed / cfg.rate_hz;
    let turn_step = cfg.turn_rate / cfg.rate_hz;
    let n = cfg.waypoints.len();
    let perimeter: f64 = (0..n)
        .map(|i| (cfg.waypoints[(i + 1) % n] - cfg.waypoints[i]).norm())
        .sum();
    let total = perimeter * cfg.laps;
    let mut poses = Vec::new();
    let first_dir = cfg.waypoints[1 % n] - cfg.waypoints[0];
    let mut heading = first_dir.y.atan2(first_dir.x);
    let mut travelled = 0.0;
    let mut leg = 0;
    while travelled < total {
        let a = cfg.waypoints[leg % n];
        let b = cfg.waypoints[(leg + 1) % n];
        let dir = b - a;
        let target = dir.y.atan2(dir.x);
        let mut dh = crate::geometry::wrap_angle(target - heading);
        while dh.abs() > 1e-12 {
            let s = dh.clamp(-turn_step, turn_step);
            heading += s;
            dh -= s;
            poses.push(Pose2::new(a.x, a.y, heading));
        }
        let len = dir.norm();
        let u = dir / len;
        let mut s = 0.0;
        while s < len - 1e-9 && travelled < total {
            let q = a + u * s;
            poses.push(Pose2::new(q.x, q.y, heading));
            s += step;
            travelled += step;
        }
        leg += 1;
    }
    poses
}

/// Simulates noisy odometry and range readings along the configured path.
pub fn simulate(cfg: &SimConfig) -> SimulatedLog {
    // separate streams keep the odometry identical across beam layouts
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut range_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    range_rng.set_stream(1);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let path = true_path(cfg);
    let mut scans = Vec::with_capacity(path.len());
    let mut truth = Vec::with_capacity(path.len());
    let mut hits = Vec::new();
    let mut odom = path[0];
    for (k, x) in path.iter().enumerate() {
        let t = k as f64 / cfg.rate_hz;
        if k > 0 {
            let u = path[k - 1].between(x);
            let cov = cfg.odometry_noise.covariance(&u);
            let noisy = MotionDelta::new(
                u.dx + cov[(0, 0)].sqrt() * unit.sample(&mut rng),
                u.dy + cov[(1, 1)].sqrt() * unit.sample(&mut rng),
                u.dtheta * (1.0 + cfg.rotation_bias) + cov[(2, 2)].sqrt() * unit.sample(&mut rng),
            );
            odom = odom.compose(&noisy);
        }
        let origin = x.translation();
        let ranges: Vec<(f64, f64)> = cfg
            .bearings
            .iter()
            .map(|&b| match cfg.world.raycast(&origin, x.theta + b, cfg.max_range) {
                Some(r) => {
                    hits.push(origin + Point2::new((x.theta + b).cos(), (x.theta + b).sin()) * r);
                    (b, r + cfg.range_noise * unit.sample(&mut range_rng))
                }
                None => (b, f64::NAN),
            })
            .collect();
        scans.push(Scan::from_ranges(t, odom, ranges));
        truth.push((t, *x));
    }
    SimulatedLog { scans, truth, hits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn raycast_hits_nearest_wall() {
        let w = World::room(4.0, 3.0);
        let r = w.raycast(&p(1.0, 1.0), 0.0, 10.0).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "stub wall at x = 2");
        let r = w.raycast(&p(1.0, 1.0), PI / 2.0, 10.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(w.raycast(&p(1.0, 1.0), PI / 2.0, 1.5).is_none());
    }

    #[test]
    fn square_loop_path_and_readings() {
        let cfg = SimConfig {
            range_noise: 0.0,
            odometry_noise: OdometryNoise {
                a1: 0.0,
                a2: 0.0,
                a3: 0.0,
                a4: 0.0,
            },
            ..SimConfig::square_loop(1)
        };
        let log = simulate(&cfg);
        // 50 m of travel at 5 cm per step plus in-place turns
        assert!(log.scans.len() > 1000 && log.scans.len() < 1200, "{}", log.scans.len());
        for (s, (_, x)) in log.scans.iter().zip(&log.truth) {
            assert!((s.odom_pose.x - x.x).abs() < 1e-9 && (s.odom_pose.y - x.y).abs() < 1e-9);
        }
        // on the first leg the side rangers see the corridor walls 1 m away
        let s = &log.scans[20];
        assert!((s.beams[1].range - 1.0).abs() < 1e-12);
        assert!((s.beams[3].range - 1.0).abs() < 1e-12);
        for h in &log.hits {
            assert!(cfg.world.distance_to_walls(h) < 1e-9);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let a = simulate(&SimConfig::square_loop(5));
        let b = simulate(&SimConfig::square_loop(5));
        let c = simulate(&SimConfig::square_loop(6));
        assert_eq!(a, b);
        assert_ne!(a.scans[500].odom_pose, c.scans[500].odom_pose);
        let ring = SimConfig::square_loop(5).with_ring(4);
        for (b, c) in ring.bearings.iter().zip(CRAZYFLIE_BEARINGS) {
            assert!((b - c).abs() < 1e-12);
        }
        let wide = simulate(&SimConfig::square_loop(5).with_scanner(30, PI));
        assert_eq!(a.scans[500].odom_pose, wide.scans[500].odom_pose);
    }
}
