//! Residual blocks of the landmark and pose graphs.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::geometry::{compose_jacobians, inverse_jacobian, wrap_angle, MotionDelta, Pose2};
use crate::line_features::PolarLine;
use crate::solver::Factor;

fn pose_of(v: &[f64]) -> Pose2 {
    Pose2 {
        x: v[0],
        y: v[1],
        theta: v[2],
    }
}

fn to_dyn3(m: Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// Relative-pose constraint `e = z⁻¹ ⊕ (xᵢ⁻¹ ⊕ xⱼ)` over `[xᵢ, xⱼ]`.
#[derive(Debug, Clone, Copy)]
pub struct BetweenFactor {
    pub measurement: MotionDelta,
}

impl BetweenFactor {
    pub fn error(&self, xi: &Pose2, xj: &Pose2) -> Pose2 {
        let rel = xi.between(xj);
        self.measurement.inverse().as_pose().compose(&rel)
    }
}

impl Factor for BetweenFactor {
    fn dim(&self) -> usize {
        3
    }

    fn linearize(&self, values: &[&[f64]]) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let xi = pose_of(values[0]);
        let xj = pose_of(values[1]);
        let xi_inv = xi.inverse();
        let rel = xi_inv.compose(&xj.as_delta());
        let zinv = self.measurement.inverse().as_pose();
        let e = zinv.compose(&rel.as_delta());
        let (_, d_rel) = compose_jacobians(&zinv, &rel.as_delta());
        let (d_inv, d_j) = compose_jacobians(&xi_inv, &xj.as_delta());
        let ji = d_rel * d_inv * inverse_jacobian(&xi.as_delta());
        let jj = d_rel * d_j;
        (
            DVector::from_row_slice(&[e.x, e.y, e.theta]),
            vec![to_dyn3(ji), to_dyn3(jj)],
        )
    }

    fn residual(&self, values: &[&[f64]]) -> DVector<f64> {
        let e = self.error(&pose_of(values[0]), &pose_of(values[1]));
        DVector::from_row_slice(&[e.x, e.y, e.theta])
    }
}

/// Line observation `e = v − f(x⁻¹, l)` over `[x, l]`: the global line `l`
/// re-expressed in the frame of `x`, compared with the measured line `v`.
#[derive(Debug, Clone, Copy)]
pub struct PoseLineFactor {
    pub measurement: PolarLine,
}

/// Global line `(ρ, α)` seen from pose `x`, with the sign flip that keeps
/// `ρ ≥ 0`. Returns the local line and whether it was flipped.
pub fn line_in_pose_frame(x: &Pose2, rho: f64, alpha: f64) -> (f64, f64, bool) {
    let (s, c) = alpha.sin_cos();
    let r = rho - x.x * c - x.y * s;
    let a = alpha - x.theta;
    if r < 0.0 {
        (-r, wrap_angle(a + std::f64::consts::PI), true)
    } else {
        (r, wrap_angle(a), false)
    }
}

impl Factor for PoseLineFactor {
    fn dim(&self) -> usize {
        2
    }

    fn linearize(&self, values: &[&[f64]]) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let x = pose_of(values[0]);
        let (rho, alpha) = (values[1][0], values[1][1]);
        let (r, a, flipped) = line_in_pose_frame(&x, rho, alpha);
        let e = DVector::from_row_slice(&[self.measurement.rho - r, wrap_angle(self.measurement.alpha - a)]);
        let (s, c) = alpha.sin_cos();
        let sign = if flipped { -1.0 } else { 1.0 };
        // derivatives of f, negated because e = v − f
        let jx = DMatrix::from_row_slice(2, 3, &[sign * c, sign * s, 0.0, 0.0, 0.0, 1.0]);
        let jl = DMatrix::from_row_slice(2, 2, &[-sign, -sign * (x.x * s - x.y * c), 0.0, -1.0]);
        (e, vec![jx, jl])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_support::{random_pose, rng};
    use rand::Rng;

    fn fd_check(f: &dyn Factor, values: &[Vec<f64>], tol: f64) {
        let refs: Vec<&[f64]> = values.iter().map(|v| v.as_slice()).collect();
        let (_, jacs) = f.linearize(&refs);
        let h = 1e-6;
        for (k, base) in values.iter().enumerate() {
            for c in 0..base.len() {
                let eval = |delta: f64| {
                    let mut vals = values.to_vec();
                    vals[k][c] += delta;
                    let refs: Vec<&[f64]> = vals.iter().map(|v| v.as_slice()).collect();
                    f.residual(&refs)
                };
                let up = eval(h);
                let down = eval(-h);
                for r in 0..f.dim() {
                    let mut d = up[r] - down[r];
                    if (f.dim() == 3 && r == 2) || (f.dim() == 2 && r == 1) {
                        d = wrap_angle(d);
                    }
                    let fd = d / (2.0 * h);
                    let an = jacs[k][(r, c)];
                    assert!(
                        (fd - an).abs() <= tol * (1.0 + an.abs()),
                        "var {k} col {c} row {r}: fd {fd} analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn between_jacobians_match_finite_differences() {
        let mut rng = rng(21);
        for _ in 0..200 {
            let xi = random_pose(&mut rng, 5.0);
            let xj = random_pose(&mut rng, 5.0);
            let f = BetweenFactor {
                measurement: random_pose(&mut rng, 2.0).as_delta(),
            };
            fd_check(
                &f,
                &[xi.to_vector().as_slice().to_vec(), xj.to_vector().as_slice().to_vec()],
                1e-5,
            );
        }
    }

    #[test]
    fn pose_line_jacobians_match_finite_differences() {
        let mut rng = rng(22);
        let mut checked = 0;
        while checked < 200 {
            let x = random_pose(&mut rng, 3.0);
            let l = PolarLine::new(rng.random_range(0.5..6.0), rng.random_range(-3.0..3.0));
            let (r, _, _) = line_in_pose_frame(&x, l.rho, l.alpha);
            if r < 0.05 {
                continue;
            }
            let f = PoseLineFactor {
                measurement: PolarLine::new(rng.random_range(0.5..6.0), rng.random_range(-3.0..3.0)),
            };
            fd_check(&f, &[x.to_vector().as_slice().to_vec(), vec![l.rho, l.alpha]], 1e-5);
            checked += 1;
        }
    }

    #[test]
    fn line_seen_from_pose_matches_polar_line_frame_change() {
        let mut rng = rng(23);
        for _ in 0..100 {
            let x = random_pose(&mut rng, 3.0);
            let l = PolarLine::new(rng.random_range(0.0..6.0), rng.random_range(-3.0..3.0));
            let (r, a, _) = line_in_pose_frame(&x, l.rho, l.alpha);
            let expected = l.in_frame(&x);
            assert!((r - expected.rho).abs() < 1e-10);
            if r > 1e-9 {
                assert!(wrap_angle(a - expected.alpha).abs() < 1e-10);
            }
        }
        let (r, a, _) = line_in_pose_frame(&Pose2::new(1.0, 0.0, 0.0), 2.0, 0.0);
        assert!((r - 1.0).abs() < 1e-15 && a.abs() < 1e-15);
    }

    #[test]
    fn exact_measurements_give_zero_error() {
        let xi = Pose2::new(0.3, -1.0, 0.4);
        let xj = Pose2::new(2.0, 0.5, -2.9);
        let f = BetweenFactor {
            measurement: xi.between(&xj),
        };
        let e = f.error(&xi, &xj);
        assert!(e.x.abs() < 1e-12 && e.y.abs() < 1e-12 && e.theta.abs() < 1e-12);
    }
}
