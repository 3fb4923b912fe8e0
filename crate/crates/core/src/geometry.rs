//! SE(2) algebra, point transforms, their Jacobians, and first-order
//! covariance propagation.
//!
//! Convention: `transform_point(p, x)` maps a point expressed in the frame of
//! `x` into the frame `x` lives in (the global frame for poses), using the
//! standard counter-clockwise rotation. `to_frame(p, x)` is its exact inverse.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix2x3, Matrix3, SymmetricEigen, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;
pub type Cov2 = Matrix2<f64>;
pub type Cov3 = Matrix3<f64>;

/// Eigenvalues down to this are treated as numerical noise and clamped.
pub const PSD_SLACK: f64 = 1e-9;

/// Wraps an angle to `[-π, π)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - TAU * ((theta + PI) / TAU).floor();
    // floor() can land exactly on the open end after rounding
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Robot state in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Relative motion expressed in the frame of the pose it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// `self ⊕ delta`.
    pub fn compose(&self, delta: &MotionDelta) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * delta.dx - s * delta.dy,
            self.y + s * delta.dx + c * delta.dy,
            self.theta + delta.dtheta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)
    }

    /// Motion taking `self` to `other`: `self⁻¹ ⊕ other`.
    pub fn between(&self, other: &Pose2) -> MotionDelta {
        self.inverse().compose(&other.as_delta()).as_delta()
    }

    pub fn as_delta(&self) -> MotionDelta {
        MotionDelta {
            dx: self.x,
            dy: self.y,
            dtheta: self.theta,
        }
    }

    pub fn transform_point(&self, p: &Point2) -> Point2 {
        transform_point(p, self)
    }
}

impl MotionDelta {
    pub const IDENTITY: MotionDelta = MotionDelta {
        dx: 0.0,
        dy: 0.0,
        dtheta: 0.0,
    };

    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        MotionDelta {
            dx,
            dy,
            dtheta: wrap_angle(dtheta),
        }
    }

    pub fn as_pose(&self) -> Pose2 {
        Pose2 {
            x: self.dx,
            y: self.dy,
            theta: self.dtheta,
        }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.dx, self.dy, self.dtheta)
    }

    pub fn compose(&self, other: &MotionDelta) -> MotionDelta {
        self.as_pose().compose(other).as_delta()
    }

    pub fn inverse(&self) -> MotionDelta {
        self.as_pose().inverse().as_delta()
    }

    pub fn translation_norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

#[inline]
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn compose(a: &Pose2, b: &MotionDelta) -> Pose2 {
    a.compose(b)
}

pub fn invert(a: &Pose2) -> Pose2 {
    a.inverse()
}

/// Maps `p` from the frame of `x` into the parent frame: `R(θ)p + t`.
#[inline]
pub fn transform_point(p: &Point2, x: &Pose2) -> Point2 {
    let (s, c) = x.theta.sin_cos();
    Point2::new(c * p.x - s * p.y + x.x, s * p.x + c * p.y + x.y)
}

/// Maps `p` from the parent frame into the frame of `x`: `R(θ)ᵀ(p - t)`.
#[inline]
pub fn to_frame(p: &Point2, x: &Pose2) -> Point2 {
    let (s, c) = x.theta.sin_cos();
    let (dx, dy) = (p.x - x.x, p.y - x.y);
    Point2::new(c * dx + s * dy, -s * dx + c * dy)
}

/// Jacobians of `a ⊕ b` with respect to `a` and to `b`.
pub fn compose_jacobians(a: &Pose2, b: &MotionDelta) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = a.theta.sin_cos();
    let ja = Matrix3::new(
        1.0,
        0.0,
        -s * b.dx - c * b.dy,
        0.0,
        1.0,
        c * b.dx - s * b.dy,
        0.0,
        0.0,
        1.0,
    );
    let jb = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    (ja, jb)
}

/// Jacobian of `invert` at `u`.
pub fn inverse_jacobian(u: &MotionDelta) -> Matrix3<f64> {
    let (s, c) = u.dtheta.sin_cos();
    Matrix3::new(-c, -s, s * u.dx - c * u.dy, s, -c, c * u.dx + s * u.dy, 0.0, 0.0, -1.0)
}

/// Jacobians of `transform_point(p, x)` with respect to the pose `x` and the
/// point `p`.
pub fn transform_point_jacobians(p: &Point2, x: &Pose2) -> (Matrix2x3<f64>, Matrix2<f64>) {
    let (s, c) = x.theta.sin_cos();
    let j_pose = Matrix2x3::new(1.0, 0.0, -s * p.x - c * p.y, 0.0, 1.0, c * p.x - s * p.y);
    (j_pose, Matrix2::new(c, -s, s, c))
}

macro_rules! impl_repair_psd {
    ($name:ident, $mat:ty) => {
        /// Symmetrizes `m` and clamps eigenvalues within [`PSD_SLACK`] of zero.
        /// Anything more negative is reported as an error.
        pub fn $name(m: &$mat) -> Result<$mat> {
            let sym = (m + m.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            let min = eig.eigenvalues.min();
            if min < -PSD_SLACK {
                return Err(Error::NotPsd { min_eigenvalue: min });
            }
            if min >= 0.0 {
                return Ok(sym);
            }
            let clamped = eig.eigenvalues.map(|v| v.max(0.0));
            let out = eig.eigenvectors * <$mat>::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            Ok((out + out.transpose()) * 0.5)
        }
    };
}

impl_repair_psd!(repair_psd3, Matrix3<f64>);
impl_repair_psd!(repair_psd2, Matrix2<f64>);

/// Covariance of `u₁ ⊕ u₂ ⊕ … ⊕ uₙ` by recursive first-order propagation,
/// treating the inputs as independent.
pub fn propagate_odometry_covariance(deltas: &[(MotionDelta, Cov3)]) -> Result<Cov3> {
    let Some(((last, last_cov), head)) = deltas.split_last() else {
        return Err(Error::Precondition(
            "covariance propagation needs at least one delta".into(),
        ));
    };
    let mut rest = *last;
    let mut cov = *last_cov;
    for (u, u_cov) in head.iter().rev() {
        (rest, cov) = prepend_delta(u, u_cov, &rest, &cov);
    }
    repair_psd3(&cov)
}

/// Extends a chain on the left: returns `u ⊕ rest` and its covariance.
pub fn prepend_delta(u: &MotionDelta, u_cov: &Cov3, rest: &MotionDelta, rest_cov: &Cov3) -> (MotionDelta, Cov3) {
    let (ja, jb) = compose_jacobians(&u.as_pose(), rest);
    let cov = ja * u_cov * ja.transpose() + jb * rest_cov * jb.transpose();
    (u.compose(rest), cov)
}

/// Covariance of `u⁻¹` given the covariance of `u`.
pub fn inverse_delta_covariance(u: &MotionDelta, cov: &Cov3) -> Result<Cov3> {
    let j = inverse_jacobian(u);
    repair_psd3(&(j * cov * j.transpose()))
}

/// Per-beam sensor characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub sigma_d: f64,
    pub range_cap: f64,
    pub beam_bearings: Vec<f64>,
}

impl SensorModel {
    pub fn new(sigma_d: f64, range_cap: f64, beam_bearings: Vec<f64>) -> Result<Self> {
        if sigma_d.is_nan() || sigma_d <= 0.0 {
            return Err(Error::Precondition("sigma_d must be positive".into()));
        }
        if range_cap.is_nan() || range_cap <= 0.0 {
            return Err(Error::Precondition("range_cap must be positive".into()));
        }
        Ok(SensorModel {
            sigma_d,
            range_cap,
            beam_bearings,
        })
    }
}

/// Range-only noise: rank one along the beam direction.
pub fn raw_point_covariance(bearing: f64, model: &SensorModel) -> Cov2 {
    range_point_covariance(bearing, model.sigma_d)
}

pub fn range_point_covariance(bearing: f64, sigma_d: f64) -> Cov2 {
    let v = Vector2::new(bearing.cos(), bearing.sin());
    v * v.transpose() * (sigma_d * sigma_d)
}

/// Covariance of `transform_point(p, transform)` when both the transform
/// (covariance `transform_cov`) and the point (`p_cov`) are uncertain and
/// independent.
pub fn transformed_point_covariance(p: &Point2, transform: &Pose2, transform_cov: &Cov3, p_cov: &Cov2) -> Cov2 {
    let (j_pose, j_point) = transform_point_jacobians(p, transform);
    let out = j_pose * transform_cov * j_pose.transpose() + j_point * p_cov * j_point.transpose();
    (out + out.transpose()) * 0.5
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn pose_close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        close(a.x, b.x, tol) && close(a.y, b.y, tol) && close(wrap_angle(a.theta - b.theta), 0.0, tol)
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!(close(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-15));
        for k in -50..50 {
            let t = wrap_angle(k as f64 * 0.7331);
            assert!((-PI..PI).contains(&t));
        }
    }

    #[test]
    fn compose_examples() {
        let r = Pose2::IDENTITY.compose(&MotionDelta::new(1.0, 2.0, 0.3));
        assert!(pose_close(&r, &Pose2::new(1.0, 2.0, 0.3), 1e-15));
        let r = compose(&Pose2::new(1.0, 0.0, PI / 2.0), &MotionDelta::new(1.0, 0.0, 0.0));
        assert!(pose_close(&r, &Pose2::new(1.0, 1.0, PI / 2.0), 1e-15));
    }

    #[test]
    fn invert_examples() {
        assert!(pose_close(&invert(&Pose2::IDENTITY), &Pose2::IDENTITY, 0.0));
        assert!(pose_close(
            &invert(&Pose2::new(1.0, 0.0, 0.0)),
            &Pose2::new(-1.0, 0.0, 0.0),
            0.0
        ));
        assert!(pose_close(
            &invert(&Pose2::new(0.0, 0.0, PI / 2.0)),
            &Pose2::new(0.0, 0.0, -PI / 2.0),
            1e-16
        ));
    }

    #[test]
    fn group_laws_on_random_poses() {
        let mut rng = rng(1);
        for _ in 0..1000 {
            let a = random_pose(&mut rng, 10.0);
            let b = random_pose(&mut rng, 10.0).as_delta();
            let c = random_pose(&mut rng, 10.0).as_delta();
            // a ⊕ a⁻¹ and a⁻¹ ⊕ a
            assert!(pose_close(&a.compose(&a.inverse().as_delta()), &Pose2::IDENTITY, 1e-12));
            assert!(pose_close(&a.inverse().compose(&a.as_delta()), &Pose2::IDENTITY, 1e-12));
            // identity is two-sided
            assert!(pose_close(&a.compose(&MotionDelta::IDENTITY), &a, 1e-15));
            assert!(pose_close(&Pose2::IDENTITY.compose(&a.as_delta()), &a, 1e-15));
            // associativity
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            assert!(pose_close(&left, &right, 1e-10));
            assert!((-PI..PI).contains(&left.theta));
        }
    }

    #[test]
    fn transform_point_examples_and_round_trip() {
        let p = Point2::new(1.0, 0.0);
        assert_eq!(transform_point(&p, &Pose2::IDENTITY), p);
        let q = transform_point(&p, &Pose2::new(0.0, 0.0, PI / 2.0));
        assert!(close(q.x, 0.0, 1e-15) && close(q.y, 1.0, 1e-15));

        let mut rng = rng(2);
        for _ in 0..1000 {
            let x = random_pose(&mut rng, 20.0);
            let p = Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let back = to_frame(&transform_point(&p, &x), &x);
            assert!((back - p).norm() < 1e-10);
            let via_inverse = transform_point(&transform_point(&p, &x), &x.inverse());
            assert!((via_inverse - p).norm() < 1e-10);
        }
    }

    fn fd_jacobian3(f: impl Fn(&Vector3<f64>) -> Vector3<f64>, at: &Vector3<f64>) -> Matrix3<f64> {
        let h = 1e-6;
        let mut j = Matrix3::zeros();
        for k in 0..3 {
            let mut plus = *at;
            let mut minus = *at;
            plus[k] += h;
            minus[k] -= h;
            let mut d = (f(&plus) - f(&minus)) / (2.0 * h);
            d[2] = wrap_angle(d[2] * 2.0 * h) / (2.0 * h);
            j.set_column(k, &d);
        }
        j
    }

    fn assert_matrix_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        let scale = b.amax().max(1.0);
        assert!((a - b).amax() <= tol * scale, "\n{a}\nvs\n{b}");
    }

    #[test]
    fn compose_jacobians_match_finite_differences() {
        let mut rng = rng(3);
        for _ in 0..200 {
            let a = random_pose(&mut rng, 5.0);
            let b = random_pose(&mut rng, 5.0).as_delta();
            let (ja, jb) = compose_jacobians(&a, &b);
            let fa = fd_jacobian3(
                |v| {
                    let r = Pose2::new(v[0], v[1], v[2]).compose(&b);
                    Vector3::new(r.x, r.y, r.theta)
                },
                &a.to_vector(),
            );
            let fb = fd_jacobian3(
                |v| {
                    let r = a.compose(&MotionDelta::new(v[0], v[1], v[2]));
                    Vector3::new(r.x, r.y, r.theta)
                },
                &b.to_vector(),
            );
            assert_matrix_close(
                &DMatrix::from_column_slice(3, 3, ja.as_slice()),
                &DMatrix::from_column_slice(3, 3, fa.as_slice()),
                1e-6,
            );
            assert_matrix_close(
                &DMatrix::from_column_slice(3, 3, jb.as_slice()),
                &DMatrix::from_column_slice(3, 3, fb.as_slice()),
                1e-6,
            );
        }
    }

    #[test]
    fn compose_jacobian_wrt_identity_operand() {
        let (_, jb) = compose_jacobians(&Pose2::IDENTITY, &MotionDelta::new(0.4, -0.2, 0.1));
        assert_eq!(jb, Matrix3::identity());
    }

    #[test]
    fn compose_jacobian_rotation_block_at_quarter_turn() {
        let b = MotionDelta::new(1.0, 0.0, 0.0);
        let (ja, jb) = compose_jacobians(&Pose2::new(0.0, 0.0, PI / 2.0), &b);
        // translation rows of J_b carry R(π/2) = (0, -1; 1, 0)
        assert!(close(jb[(0, 0)], 0.0, 1e-15) && close(jb[(0, 1)], -1.0, 1e-15));
        assert!(close(jb[(1, 0)], 1.0, 1e-15) && close(jb[(1, 1)], 0.0, 1e-15));
        // θ column of J_a: d/dθ of R(θ)b at θ=π/2 is (-1, 0)
        let fa = fd_jacobian3(
            |v| {
                let r = Pose2::new(v[0], v[1], v[2]).compose(&b);
                Vector3::new(r.x, r.y, r.theta)
            },
            &Vector3::new(0.0, 0.0, PI / 2.0),
        );
        assert!((ja - fa).amax() < 1e-6);
        assert!(close(ja[(0, 2)], -1.0, 1e-12) && close(ja[(1, 2)], 0.0, 1e-12));
    }

    #[test]
    fn inverse_jacobian_matches_finite_differences() {
        let mut rng = rng(4);
        for _ in 0..200 {
            let u = random_pose(&mut rng, 5.0).as_delta();
            let j = inverse_jacobian(&u);
            let f = fd_jacobian3(
                |v| MotionDelta::new(v[0], v[1], v[2]).inverse().to_vector(),
                &u.to_vector(),
            );
            assert!((j - f).amax() < 1e-6 * f.amax().max(1.0));
        }
    }

    #[test]
    fn transform_point_jacobians_match_finite_differences() {
        let mut rng = rng(5);
        let h = 1e-6;
        for _ in 0..200 {
            let x = random_pose(&mut rng, 5.0);
            let p = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let (jx, jp) = transform_point_jacobians(&p, &x);
            for k in 0..3 {
                let mut plus = x.to_vector();
                let mut minus = x.to_vector();
                plus[k] += h;
                minus[k] -= h;
                let d = (transform_point(&p, &Pose2::from_vector(&plus))
                    - transform_point(&p, &Pose2::from_vector(&minus)))
                    / (2.0 * h);
                assert!((jx.column(k) - d).amax() < 1e-6 * d.amax().max(1.0));
            }
            for k in 0..2 {
                let mut plus = p;
                let mut minus = p;
                plus[k] += h;
                minus[k] -= h;
                let d = (transform_point(&plus, &x) - transform_point(&minus, &x)) / (2.0 * h);
                assert!((jp.column(k) - d).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn propagation_base_cases() {
        assert!(propagate_odometry_covariance(&[]).is_err());
        let c = Cov3::from_diagonal(&Vector3::new(0.01, 0.02, 0.003));
        let single = propagate_odometry_covariance(&[(MotionDelta::new(1.0, 0.5, 0.2), c)]).unwrap();
        assert!((single - c).amax() < 1e-15);

        let a = Cov3::from_diagonal(&Vector3::new(0.01, 0.02, 0.0));
        let b = Cov3::from_diagonal(&Vector3::new(0.03, 0.05, 0.0));
        let sum = propagate_odometry_covariance(&[
            (MotionDelta::new(1.0, 0.0, 0.0), a),
            (MotionDelta::new(2.0, 0.0, 0.0), b),
        ])
        .unwrap();
        assert!((sum - (a + b)).amax() < 1e-15);
    }

    #[test]
    fn propagation_matches_monte_carlo() {
        let mut rng = rng(6);
        let chain: Vec<(MotionDelta, Cov3)> = (0..5)
            .map(|_| {
                let u = MotionDelta::new(
                    rng.random_range(0.2..1.0),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.5..0.5),
                );
                (u, random_cov3(&mut rng, 0.03))
            })
            .collect();
        let analytic = propagate_odometry_covariance(&chain).unwrap();
        let nominal = chain.iter().fold(MotionDelta::IDENTITY, |acc, (u, _)| acc.compose(u));

        let n = 100_000;
        let samples: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                let r = chain.iter().fold(MotionDelta::IDENTITY, |acc, (u, c)| {
                    let e = sample3(&mut rng, c);
                    acc.compose(&MotionDelta::new(u.dx + e[0], u.dy + e[1], u.dtheta + e[2]))
                });
                let mut v = r.to_vector();
                v[2] = nominal.dtheta + wrap_angle(v[2] - nominal.dtheta);
                v
            })
            .collect();
        let mean = samples.iter().sum::<Vector3<f64>>() / n as f64;
        let mc = sample_covariance3(&samples, &mean);
        let err = rel_frobenius(
            &DMatrix::from_column_slice(3, 3, analytic.as_slice()),
            &DMatrix::from_column_slice(3, 3, mc.as_slice()),
        );
        assert!(err < 0.10, "relative Frobenius error {err}");
    }

    #[test]
    fn inverse_covariance_at_identity_is_unchanged() {
        let c = Cov3::from_diagonal(&Vector3::new(0.1, 0.2, 0.3));
        let inv = inverse_delta_covariance(&MotionDelta::IDENTITY, &c).unwrap();
        assert!((inv - c).amax() < 1e-15);
    }

    #[test]
    fn inverse_covariance_matches_monte_carlo() {
        let mut rng = rng(7);
        let u = MotionDelta::new(1.3, -0.4, 0.6);
        let c = random_cov3(&mut rng, 0.05);
        let analytic = inverse_delta_covariance(&u, &c).unwrap();
        let nominal = u.inverse();
        let n = 100_000;
        let samples: Vec<Vector3<f64>> = (0..n)
            .map(|_| {
                let e = sample3(&mut rng, &c);
                let mut v = MotionDelta::new(u.dx + e[0], u.dy + e[1], u.dtheta + e[2])
                    .inverse()
                    .to_vector();
                v[2] = nominal.dtheta + wrap_angle(v[2] - nominal.dtheta);
                v
            })
            .collect();
        let mean = samples.iter().sum::<Vector3<f64>>() / n as f64;
        let mc = sample_covariance3(&samples, &mean);
        let err = rel_frobenius(
            &DMatrix::from_column_slice(3, 3, analytic.as_slice()),
            &DMatrix::from_column_slice(3, 3, mc.as_slice()),
        );
        assert!(err < 0.10, "relative Frobenius error {err}");
    }

    #[test]
    fn raw_point_covariance_is_rank_one() {
        let model = SensorModel::new(0.1, 5.0, vec![]).unwrap();
        let c0 = raw_point_covariance(0.0, &model);
        assert!((c0 - Cov2::new(0.01, 0.0, 0.0, 0.0)).amax() < 1e-15);
        let c1 = raw_point_covariance(PI / 2.0, &model);
        assert!((c1 - Cov2::new(0.0, 0.0, 0.0, 0.01)).amax() < 1e-15);
        for k in 0..64 {
            let c = raw_point_covariance(k as f64 * 0.1 - 3.0, &model);
            assert!(c.determinant().abs() < 1e-15);
            assert!(close(c.trace(), 0.01, 1e-15));
        }
        assert!(SensorModel::new(0.0, 5.0, vec![]).is_err());
        assert!(SensorModel::new(0.1, -1.0, vec![]).is_err());
    }

    #[test]
    fn transformed_point_covariance_special_cases() {
        let p = Point2::new(2.0, 1.0);
        let pc = Cov2::new(0.02, 0.005, 0.005, 0.01);
        let out = transformed_point_covariance(&p, &Pose2::IDENTITY, &Cov3::zeros(), &pc);
        assert!((out - pc).amax() < 1e-15);

        let s = 0.04;
        let out = transformed_point_covariance(
            &p,
            &Pose2::new(0.3, 0.1, 0.7),
            &Cov3::from_diagonal(&Vector3::new(s, s, 0.0)),
            &Cov2::zeros(),
        );
        assert!((out - Cov2::from_diagonal(&Vector2::new(s, s))).amax() < 1e-15);
    }

    #[test]
    fn transformed_point_covariance_matches_monte_carlo() {
        let mut rng = rng(8);
        let p = Point2::new(3.0, -1.5);
        let x = Pose2::new(0.5, -0.2, 0.4);
        let xc = random_cov3(&mut rng, 0.04);
        let pc = Cov2::new(0.004, 0.001, 0.001, 0.002);
        let analytic = transformed_point_covariance(&p, &x, &xc, &pc);
        let lp = pc.cholesky().unwrap().l();
        let n = 100_000;
        let samples: Vec<Point2> = (0..n)
            .map(|_| {
                let e = sample3(&mut rng, &xc);
                let z = Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let noisy_p = p + lp * z;
                transform_point(&noisy_p, &Pose2::new(x.x + e[0], x.y + e[1], x.theta + e[2]))
            })
            .collect();
        let mean = samples.iter().sum::<Point2>() / n as f64;
        let mc = samples
            .iter()
            .map(|s| (s - mean) * (s - mean).transpose())
            .sum::<Cov2>()
            / (n as f64 - 1.0);
        let err = (analytic - mc).norm() / mc.norm();
        assert!(err < 0.10, "relative Frobenius error {err}");
    }

    #[test]
    fn psd_repair_clamps_within_slack_and_rejects_beyond() {
        let m = Cov3::from_diagonal(&Vector3::new(1.0, 2.0, -1e-12));
        let r = repair_psd3(&m).unwrap();
        assert!(SymmetricEigen::new(r).eigenvalues.min() >= -1e-15);
        assert!(repair_psd3(&Cov3::from_diagonal(&Vector3::new(1.0, -1e-3, 1.0))).is_err());
        let asym = Cov2::new(1.0, 0.2, 0.1, 1.0);
        let r = repair_psd2(&asym).unwrap();
        assert_eq!(r, r.transpose());
    }
}
