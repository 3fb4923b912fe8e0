//! Log-odds occupancy grids, frozen submaps with max-kernel lookup grids,
//! and global map rendering.

use std::fmt;
use std::str::FromStr;

use crate::data_io::ProbabilityImage;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};

/// Neighbourhood of the max filter applied to frozen submaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    None,
    K3,
    K5,
    K7,
}

impl Kernel {
    pub fn radius(self) -> usize {
        match self {
            Kernel::None => 0,
            Kernel::K3 => 1,
            Kernel::K5 => 2,
            Kernel::K7 => 3,
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Kernel::None),
            "k3" => Ok(Kernel::K3),
            "k5" => Ok(Kernel::K5),
            "k7" => Ok(Kernel::K7),
            other => Err(Error::Config {
                key: "kernel".into(),
                message: format!("unknown kernel `{other}` (none, k3, k5, k7)"),
            }),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::None => "none",
            Kernel::K3 => "k3",
            Kernel::K5 => "k5",
            Kernel::K7 => "k7",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub cell_size: f64,
    /// Side length of a submap (m).
    pub extent: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Value unobserved cells contribute to a match score.
    pub unknown_score: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            cell_size: 0.1,
            extent: 20.0,
            p_hit: 0.85,
            p_miss: 0.4,
            p_min: 0.02,
            p_max: 0.98,
            unknown_score: 0.3,
        }
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn probability(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Square-celled grid whose cell `(ix, iy)` is centred at
/// `origin ⊕ ((ix − cx)·c, (iy − cy)·c)` with `(cx, cy)` the centre cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Pose2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    /// Cell index of the grid-frame origin.
    pub center: (i64, i64),
    log_odds: Vec<f64>,
    known: Vec<bool>,
}

impl OccupancyGrid {
    /// Grid of `width × height` cells, all unknown.
    pub fn new(origin: Pose2, cell_size: f64, width: usize, height: usize, center: (i64, i64)) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        OccupancyGrid {
            origin,
            cell_size,
            width,
            height,
            center,
            log_odds: vec![0.0; width * height],
            known: vec![false; width * height],
        }
    }

    /// Square grid of side `extent` centred on `origin`.
    pub fn centered(origin: Pose2, cell_size: f64, extent: f64) -> Self {
        let half = (extent / (2.0 * cell_size)).round() as i64;
        let n = (2 * half + 1) as usize;
        Self::new(origin, cell_size, n, n, (half, half))
    }

    /// Nearest cell to a point in the grid frame.
    pub fn cell_of(&self, q: &Point2) -> (i64, i64) {
        (
            (q.x / self.cell_size).round() as i64 + self.center.0,
            (q.y / self.cell_size).round() as i64 + self.center.1,
        )
    }

    /// Centre of a cell in the grid frame.
    pub fn cell_center(&self, ix: i64, iy: i64) -> Point2 {
        Point2::new(
            (ix - self.center.0) as f64 * self.cell_size,
            (iy - self.center.1) as f64 * self.cell_size,
        )
    }

    #[inline]
    pub fn index(&self, ix: i64, iy: i64) -> Option<usize> {
        (ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height)
            .then(|| iy as usize * self.width + ix as usize)
    }

    pub fn is_known(&self, ix: i64, iy: i64) -> bool {
        self.index(ix, iy).is_some_and(|i| self.known[i])
    }

    pub fn log_odds(&self, ix: i64, iy: i64) -> Option<f64> {
        self.index(ix, iy).filter(|&i| self.known[i]).map(|i| self.log_odds[i])
    }

    /// Occupancy probability, `None` when unobserved or outside.
    pub fn probability(&self, ix: i64, iy: i64) -> Option<f64> {
        self.log_odds(ix, iy).map(probability)
    }

    pub fn set_log_odds(&mut self, ix: i64, iy: i64, l: f64) {
        if let Some(i) = self.index(ix, iy) {
            self.log_odds[i] = l;
            self.known[i] = true;
        }
    }

    fn update(&mut self, ix: i64, iy: i64, delta: f64, params: &GridParams) {
        if let Some(i) = self.index(ix, iy) {
            let l = self.log_odds[i] + delta;
            self.log_odds[i] = l.clamp(logit(params.p_min), logit(params.p_max));
            self.known[i] = true;
        }
    }

    pub fn known_cells(&self) -> usize {
        self.known.iter().filter(|k| **k).count()
    }

    /// Integrates one scan taken at `pose` (grid frame): endpoint cells are
    /// marked occupied, cells strictly between sensor and endpoint free.
    /// Cells outside the grid are skipped.
    pub fn insert_scan(&mut self, pose: &Pose2, points: &[Point2], params: &GridParams) {
        let l_hit = logit(params.p_hit);
        let l_miss = logit(params.p_miss);
        let start = self.cell_of(&pose.translation());
        for p in points {
            let end = self.cell_of(&pose.transform_point(p));
            if end == start {
                continue;
            }
            for (cx, cy) in ray_cells(start, end) {
                self.update(cx, cy, l_miss, params);
            }
            self.update(end.0, end.1, l_hit, params);
        }
    }

    /// Probabilities in image order (north-up).
    pub fn to_image(&self) -> ProbabilityImage {
        let mut cells = Vec::with_capacity(self.width * self.height);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                cells.push(self.probability(col as i64, row as i64));
            }
        }
        ProbabilityImage {
            width: self.width,
            height: self.height,
            cells,
        }
    }
}

/// Cells strictly between `a` and `b` on the Bresenham line, each once.
pub fn ray_cells(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize);
    loop {
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        if (x, y) != b {
            out.push((x, y));
        }
    }
    out
}

/// Score lookup grids built at freeze time.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupGrids {
    pub kernel: Kernel,
    /// Occupancy, or the unknown score for unobserved cells.
    pub raw: Vec<f32>,
    /// `raw` after the max filter.
    pub max: Vec<f32>,
    pub unknown_score: f32,
}

/// Separable max filter of radius `r` over a row-major grid, clipped at the
/// borders.
pub fn max_filter(values: &[f32], width: usize, height: usize, r: usize) -> Vec<f32> {
    if r == 0 {
        return values.to_vec();
    }
    let mut rows = vec![0.0f32; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(width - 1);
            rows[y * width + x] = row[lo..=hi].iter().copied().fold(f32::MIN, f32::max);
        }
    }
    let mut out = vec![0.0f32; values.len()];
    for x in 0..width {
        for y in 0..height {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(height - 1);
            out[y * width + x] = (lo..=hi).map(|yy| rows[yy * width + x]).fold(f32::MIN, f32::max);
        }
    }
    out
}

/// Local occupancy grid anchored at a trajectory pose. Scans are inserted
/// until it is frozen; afterwards only the lookup grids are used.
#[derive(Debug, Clone, PartialEq)]
pub struct Submap {
    pub anchor: u64,
    pub grid: OccupancyGrid,
    pub travelled: f64,
    pub scans: usize,
    lookup: Option<LookupGrids>,
}

impl Submap {
    pub fn new(anchor: u64, params: &GridParams) -> Self {
        Submap {
            anchor,
            grid: OccupancyGrid::centered(Pose2::IDENTITY, params.cell_size, params.extent),
            travelled: 0.0,
            scans: 0,
            lookup: None,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.lookup.is_some()
    }

    pub fn lookup(&self) -> Option<&LookupGrids> {
        self.lookup.as_ref()
    }

    /// `pose` is the sensor pose in the anchor frame; points in the sensor frame.
    pub fn insert_scan(&mut self, pose: &Pose2, points: &[Point2], params: &GridParams) -> Result<()> {
        if self.is_frozen() {
            return Err(Error::AlreadyFrozen);
        }
        self.grid.insert_scan(pose, points, params);
        self.scans += 1;
        Ok(())
    }

    pub fn freeze(&mut self, kernel: Kernel, unknown_score: f64) -> Result<()> {
        if self.is_frozen() {
            return Err(Error::AlreadyFrozen);
        }
        let g = &self.grid;
        let mut raw = vec![unknown_score as f32; g.width * g.height];
        for (i, r) in raw.iter_mut().enumerate() {
            if g.known[i] {
                *r = probability(g.log_odds[i]) as f32;
            }
        }
        let max = max_filter(&raw, g.width, g.height, kernel.radius());
        self.lookup = Some(LookupGrids {
            kernel,
            raw,
            max,
            unknown_score: unknown_score as f32,
        });
        Ok(())
    }

    /// Mean lookup value of `points` placed by `w` (anchor frame) at their
    /// nearest cells, using the max-kernel grid when `use_kernel` is set.
    pub fn score(&self, points: &[Point2], w: &Pose2, use_kernel: bool) -> Result<f64> {
        let lookup = self.lookup.as_ref().ok_or(Error::NotFrozen)?;
        if points.is_empty() {
            return Ok(0.0);
        }
        let table = if use_kernel { &lookup.max } else { &lookup.raw };
        let sum: f64 = points
            .iter()
            .map(|p| {
                let (ix, iy) = self.grid.cell_of(&w.transform_point(p));
                self.grid.index(ix, iy).map_or(lookup.unknown_score, |i| table[i]) as f64
            })
            .sum();
        Ok(sum / points.len() as f64)
    }
}

/// Composites submaps placed at world poses `anchors` into one world-frame
/// grid by summing log-odds, then clamping.
pub fn render_global(submaps: &[(&Submap, Pose2)], params: &GridParams) -> Result<OccupancyGrid> {
    if submaps.is_empty() {
        return Err(Error::Precondition("no submaps to render".into()));
    }
    let c = params.cell_size;
    let (mut lo, mut hi) = (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY));
    for (s, anchor) in submaps {
        let g = &s.grid;
        for (ix, iy) in [
            (0, 0),
            (g.width as i64 - 1, 0),
            (0, g.height as i64 - 1),
            (g.width as i64 - 1, g.height as i64 - 1),
        ] {
            let q = anchor.transform_point(&g.cell_center(ix, iy));
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
    }
    let lo_cell = ((lo.x / c).round() as i64, (lo.y / c).round() as i64);
    let hi_cell = ((hi.x / c).round() as i64, (hi.y / c).round() as i64);
    let width = (hi_cell.0 - lo_cell.0 + 1) as usize;
    let height = (hi_cell.1 - lo_cell.1 + 1) as usize;
    let mut out = OccupancyGrid::new(Pose2::IDENTITY, c, width, height, (-lo_cell.0, -lo_cell.1));
    let (l_min, l_max) = (logit(params.p_min), logit(params.p_max));
    for (s, anchor) in submaps {
        let inv = anchor.inverse();
        for iy in 0..height as i64 {
            for ix in 0..width as i64 {
                let q = inv.transform_point(&out.cell_center(ix, iy));
                let (sx, sy) = s.grid.cell_of(&q);
                if let Some(l) = s.grid.log_odds(sx, sy) {
                    let i = out.index(ix, iy).expect("in range");
                    out.log_odds[i] += l;
                    out.known[i] = true;
                }
            }
        }
    }
    for l in &mut out.log_odds {
        *l = l.clamp(l_min, l_max);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_support::rng;
    use rand::Rng;
    use std::f64::consts::PI;

    fn params() -> GridParams {
        GridParams::default()
    }

    #[test]
    fn log_odds_round_trip() {
        for k in 1..100 {
            let p = k as f64 / 100.0;
            assert!((probability(logit(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn single_beam_marks_endpoint_and_nine_free_cells() {
        let mut g = OccupancyGrid::centered(Pose2::IDENTITY, 0.1, 20.0);
        g.insert_scan(&Pose2::IDENTITY, &[Point2::new(1.0, 0.0)], &params());
        let (cx, cy) = g.center;
        assert!(g.probability(cx + 10, cy).unwrap() > 0.5);
        for k in 1..10 {
            assert!(g.probability(cx + k, cy).unwrap() < 0.5);
        }
        assert!(!g.is_known(cx, cy));
        assert_eq!(g.known_cells(), 10);
    }

    #[test]
    fn repeated_hits_raise_probability_until_clamp() {
        let mut g = OccupancyGrid::centered(Pose2::IDENTITY, 0.1, 20.0);
        let (cx, cy) = g.center;
        let mut last = 0.5;
        for _ in 0..10 {
            g.insert_scan(&Pose2::IDENTITY, &[Point2::new(1.0, 0.0)], &params());
            let p = g.probability(cx + 10, cy).unwrap();
            assert!(p > last || (p - 0.98).abs() < 1e-12);
            last = p;
        }
        assert!((last - 0.98).abs() < 1e-12);
    }

    #[test]
    fn degenerate_beams_change_nothing() {
        let mut g = OccupancyGrid::centered(Pose2::IDENTITY, 0.1, 20.0);
        g.insert_scan(
            &Pose2::IDENTITY,
            &[Point2::new(0.0, 0.0), Point2::new(0.02, 0.01)],
            &params(),
        );
        assert_eq!(g.known_cells(), 0);
    }

    #[test]
    fn ray_visits_each_cell_once() {
        let mut rng = rng(51);
        for _ in 0..500 {
            let a = (rng.random_range(-50..50), rng.random_range(-50..50));
            let b = (rng.random_range(-50..50), rng.random_range(-50..50));
            let cells = ray_cells(a, b);
            let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs());
            let mut uniq = cells.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), cells.len());
            assert!(!cells.contains(&a) && !cells.contains(&b));
            // 8-connected path from a to b
            let mut prev = a;
            for &c in cells.iter().chain(std::iter::once(&b)) {
                assert!((c.0 - prev.0).abs() <= 1 && (c.1 - prev.1).abs() <= 1);
                prev = c;
            }
            if a != b {
                assert_eq!(cells.len() as i64, steps - 1);
            }
        }
    }

    fn brute_max(values: &[f32], w: usize, h: usize, r: usize) -> Vec<f32> {
        let mut out = vec![0.0; values.len()];
        for y in 0..h {
            for x in 0..w {
                let mut m = f32::MIN;
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                        m = m.max(values[yy * w + xx]);
                    }
                }
                out[y * w + x] = m;
            }
        }
        out
    }

    #[test]
    fn max_filter_matches_brute_force() {
        let mut rng = rng(52);
        for r in 0..4 {
            for _ in 0..10 {
                let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
                let v: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
                assert_eq!(max_filter(&v, w, h, r), brute_max(&v, w, h, r));
            }
        }
    }

    fn submap_with_cell(ix: i64, iy: i64, p: f64) -> Submap {
        let mut s = Submap::new(
            0,
            &GridParams {
                extent: 1.0,
                ..params()
            },
        );
        s.grid.set_log_odds(ix, iy, logit(p));
        s
    }

    #[test]
    fn kernel_spreads_single_cell() {
        let mut s = submap_with_cell(5, 5, 0.9);
        s.freeze(Kernel::K3, 0.3).unwrap();
        let g = &s.grid;
        let lk = s.lookup().unwrap();
        for iy in 0..g.height as i64 {
            for ix in 0..g.width as i64 {
                let v = lk.max[g.index(ix, iy).unwrap()];
                if (4..=6).contains(&ix) && (4..=6).contains(&iy) {
                    assert!((v - 0.9).abs() < 1e-6);
                } else {
                    assert!((v - 0.3).abs() < 1e-6);
                }
            }
        }
        assert!(matches!(s.freeze(Kernel::K3, 0.3), Err(Error::AlreadyFrozen)));
        assert!(matches!(
            s.insert_scan(&Pose2::IDENTITY, &[Point2::new(0.3, 0.0)], &params()),
            Err(Error::AlreadyFrozen)
        ));
    }

    #[test]
    fn uniform_grid_is_kernel_fixed_point() {
        let mut s = Submap::new(0, &params());
        s.freeze(Kernel::K7, 0.3).unwrap();
        let lk = s.lookup().unwrap();
        assert_eq!(lk.raw, lk.max);
    }

    #[test]
    fn score_examples() {
        let mut s = submap_with_cell(5, 5, 0.9);
        assert!(matches!(s.score(&[], &Pose2::IDENTITY, true), Err(Error::NotFrozen)));
        s.freeze(Kernel::K3, 0.3).unwrap();
        let on_cell = s.grid.cell_center(5, 5);
        let raw = s.score(&[on_cell], &Pose2::IDENTITY, false).unwrap();
        assert!((raw - 0.9).abs() < 1e-6);
        let beside = s.grid.cell_center(6, 5);
        let raw = s.score(&[beside], &Pose2::IDENTITY, false).unwrap();
        let kern = s.score(&[beside], &Pose2::IDENTITY, true).unwrap();
        assert!((raw - 0.3).abs() < 1e-6);
        assert!((kern - 0.9).abs() < 1e-6);
    }

    #[test]
    fn score_invariant_under_quarter_turns() {
        let mut rng = rng(53);
        let mut s = Submap::new(
            0,
            &GridParams {
                extent: 4.0,
                ..params()
            },
        );
        let pts: Vec<Point2> = (0..30)
            .map(|_| {
                Point2::new(
                    rng.random_range(-15..15) as f64 * 0.1,
                    rng.random_range(-15..15) as f64 * 0.1,
                )
            })
            .collect();
        s.insert_scan(&Pose2::IDENTITY, &pts, &params()).unwrap();
        let mut rotated = Submap::new(
            0,
            &GridParams {
                extent: 4.0,
                ..params()
            },
        );
        let quarter = Pose2::new(0.0, 0.0, PI / 2.0);
        let c = s.grid.center;
        for iy in 0..s.grid.height as i64 {
            for ix in 0..s.grid.width as i64 {
                if let Some(l) = s.grid.log_odds(ix, iy) {
                    // (x, y) → (−y, x) in cell coordinates about the centre
                    rotated.grid.set_log_odds(c.0 - (iy - c.1), c.1 + (ix - c.0), l);
                }
            }
        }
        s.freeze(Kernel::K3, 0.3).unwrap();
        rotated.freeze(Kernel::K3, 0.3).unwrap();
        let probe: Vec<Point2> = (0..40)
            .map(|_| {
                Point2::new(
                    rng.random_range(-12..12) as f64 * 0.1,
                    rng.random_range(-12..12) as f64 * 0.1,
                )
            })
            .collect();
        let w = Pose2::new(0.2, -0.3, 0.0);
        let w_rot = quarter.compose(&w.as_delta());
        for k in [false, true] {
            let a = s.score(&probe, &w, k).unwrap();
            let b = rotated.score(&probe, &w_rot, k).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn render_single_identity_submap_is_identity() {
        let mut s = Submap::new(
            0,
            &GridParams {
                extent: 6.0,
                ..params()
            },
        );
        s.insert_scan(
            &Pose2::new(0.3, 0.1, 0.2),
            &[Point2::new(2.0, 0.5), Point2::new(1.0, -1.5)],
            &params(),
        )
        .unwrap();
        let out = render_global(&[(&s, Pose2::IDENTITY)], &params()).unwrap();
        assert_eq!(out.width, s.grid.width);
        assert_eq!(out.height, s.grid.height);
        for iy in 0..out.height as i64 {
            for ix in 0..out.width as i64 {
                assert_eq!(out.log_odds(ix, iy), s.grid.log_odds(ix, iy));
            }
        }
    }

    #[test]
    fn render_union_and_order_independence() {
        let p = GridParams {
            extent: 2.0,
            ..params()
        };
        let mk = |pts: &[Point2]| {
            let mut s = Submap::new(0, &p);
            s.insert_scan(&Pose2::IDENTITY, pts, &p).unwrap();
            s
        };
        let a = mk(&[Point2::new(0.5, 0.0)]);
        let b = mk(&[Point2::new(0.0, 0.7)]);
        let c = mk(&[Point2::new(-0.4, -0.4)]);
        let far = Pose2::new(10.0, 0.0, 0.0);
        let u = render_global(&[(&a, Pose2::IDENTITY), (&b, far)], &p).unwrap();
        assert!(u.width as f64 * 0.1 > 12.0);
        assert_eq!(u.known_cells(), a.grid.known_cells() + b.grid.known_cells());

        let poses = [
            Pose2::new(0.1, 0.0, 0.3),
            Pose2::new(0.0, 0.2, -0.1),
            Pose2::new(-0.2, 0.1, 1.0),
        ];
        let abc = render_global(&[(&a, poses[0]), (&b, poses[1]), (&c, poses[2])], &p).unwrap();
        let cab = render_global(&[(&c, poses[2]), (&a, poses[0]), (&b, poses[1])], &p).unwrap();
        assert_eq!((abc.width, abc.height), (cab.width, cab.height));
        for iy in 0..abc.height as i64 {
            for ix in 0..abc.width as i64 {
                match (abc.log_odds(ix, iy), cab.log_odds(ix, iy)) {
                    (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9),
                    (None, None) => {}
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in [Kernel::None, Kernel::K3, Kernel::K5, Kernel::K7] {
            assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
        }
        assert!("k9".parse::<Kernel>().is_err());
    }
}
