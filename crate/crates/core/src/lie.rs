//! SE(2) and SE(3) pose groups.
//!
//! Both groups use right perturbations, `x ⊕ δ = x · exp(δ)`. SE(3) tangent
//! vectors are ordered translation-first: `[ρx, ρy, ρz, ωx, ωy, ωz]`, which is
//! also the block order of `EDGE_SE3:QUAT` information matrices. SE(2) tangents
//! are `[dx, dy, dθ]`.

use std::f64::consts::PI;
use std::fmt::Debug;

use nalgebra::{Matrix2, Matrix3, Matrix6, Quaternion, SMatrix, SVector, UnitQuaternion, Vector2, Vector3, Vector6};

use crate::error::LieError;

/// Tangent vector of a `D`-dof group.
pub type Tangent<const D: usize> = SVector<f64, D>;

/// Angle below which closed forms switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;
/// Coefficients with a cancelling numerator use their series up to this angle.
const SERIES_ANGLE: f64 = 0.05;

/// `(sin θ / θ, (1 - cos θ) / θ², (θ - sin θ) / θ³)`
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    let a = if theta.abs() < SMALL_ANGLE { 1.0 - t2 / 6.0 } else { theta.sin() / theta };
    let b = if theta.abs() < SMALL_ANGLE {
        0.5 - t2 / 24.0
    } else {
        let s = (0.5 * theta).sin();
        2.0 * s * s / t2
    };
    let c = if theta.abs() < SERIES_ANGLE {
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    (a, b, c)
}

/// `1/θ² - (1 + cos θ) / (2θ sin θ)`, the quadratic coefficient of `V⁻¹` and `Jr⁻¹`.
fn inverse_coeff(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta.abs() < SERIES_ANGLE {
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        1.0 / t2 - half.cos() / half.sin() / (2.0 * theta)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Operations the solver needs from a pose type.
pub trait LieGroup<const D: usize>: Copy + Debug + PartialEq + Send + Sync + 'static {
    fn identity() -> Self;
    fn compose(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn exp(t: &Tangent<D>) -> Self;
    /// Logarithm. Total: at the SE(3) cut locus one of the two equivalent
    /// tangents is returned.
    fn log(&self) -> Tangent<D>;
    /// Adjoint matrix acting on tangent vectors.
    fn adjoint(&self) -> SMatrix<f64, D, D>;
    /// Inverse of the right Jacobian of `exp`, evaluated at `t`.
    fn right_jacobian_inv(t: &Tangent<D>) -> SMatrix<f64, D, D>;
    /// Position in 3D (planar poses have `z = 0`).
    fn translation3(&self) -> Vector3<f64>;
    /// Lift into SE(3).
    fn to_se3(&self) -> Se3;

    /// `inverse(self) · other`
    fn between(&self, other: &Self) -> Self {
        self.inverse().compose(other)
    }

    /// `self · exp(t)`
    fn retract(&self, t: &Tangent<D>) -> Self {
        self.compose(&Self::exp(t))
    }
}

// ---------------------------------------------------------------------------
// SE(2)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se2 {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl Se2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn act(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation()
    }
}

/// `(sin θ / θ, (1 - cos θ) / θ)`
fn se2_v_coeffs(theta: f64) -> (f64, f64) {
    let (a, b, _) = rodrigues_coeffs(theta);
    (a, b * theta)
}

impl LieGroup<3> for Se2 {
    fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    fn compose(&self, other: &Self) -> Self {
        let t = self.act(&other.translation());
        Se2::new(t.x, t.y, self.theta + other.theta)
    }

    fn inverse(&self) -> Self {
        let t = -(self.rotation().transpose() * self.translation());
        Se2::new(t.x, t.y, -self.theta)
    }

    fn exp(t: &Tangent<3>) -> Self {
        let theta = t[2];
        let (a, b) = se2_v_coeffs(theta);
        let x = a * t[0] - b * t[1];
        let y = b * t[0] + a * t[1];
        Se2::new(x, y, theta)
    }

    fn log(&self) -> Tangent<3> {
        let theta = self.theta;
        let (a, b) = se2_v_coeffs(theta);
        // V = [[a, -b], [b, a]]; det = a² + b²
        let det = a * a + b * b;
        let x = (a * self.x + b * self.y) / det;
        let y = (-b * self.x + a * self.y) / det;
        Tangent::<3>::new(x, y, theta)
    }

    fn adjoint(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.y, s, c, -self.x, 0.0, 0.0, 1.0)
    }

    fn right_jacobian_inv(t: &Tangent<3>) -> Matrix3<f64> {
        let (r1, r2, th) = (t[0], t[1], t[2]);
        let (a, b, c) = rodrigues_coeffs(th);
        // third column: ρ1 (θ - sin θ)/θ² - ρ2 (1 - cos θ)/θ², and its twin
        let jr = Matrix3::new(
            a,
            b * th,
            r1 * c * th - r2 * b,
            -b * th,
            a,
            r1 * b + r2 * c * th,
            0.0,
            0.0,
            1.0,
        );
        // The rotation block is a scaled rotation; never singular for θ ∈ (-π, π].
        jr.try_inverse().unwrap_or_else(Matrix3::identity)
    }

    fn translation3(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 0.0)
    }

    fn to_se3(&self) -> Se3 {
        Se3::new(
            self.translation3(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.theta),
        )
    }
}

// ---------------------------------------------------------------------------
// SO(3) helpers
// ---------------------------------------------------------------------------

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::new_normalize(*q.quaternion());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-*q.quaternion())
    } else {
        q
    }
}

pub fn so3_exp(w: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = w.norm();
    let q = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let k = 0.5 - t2 / 48.0;
        Quaternion::new(1.0 - t2 / 8.0, k * w.x, k * w.y, k * w.z)
    } else {
        let half = 0.5 * theta;
        let k = half.sin() / theta;
        Quaternion::new(half.cos(), k * w.x, k * w.y, k * w.z)
    };
    canonical(UnitQuaternion::new_normalize(q))
}

/// Rotation angle in `[0, π]` of a canonical quaternion.
fn so3_angle(q: &UnitQuaternion<f64>) -> f64 {
    let v = q.vector();
    2.0 * v.norm().atan2(q.w.abs())
}

pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(*q);
    let v = q.vector().into_owned();
    let n = v.norm();
    let w = q.w;
    if n < SMALL_ANGLE * 0.5 {
        // θ ≈ 2n/w; series of 2·atan(n/w)/n
        let r = n / w;
        v * (2.0 / w) * (1.0 - r * r / 3.0)
    } else {
        let theta = 2.0 * n.atan2(w);
        v * (theta / n)
    }
}

/// Right Jacobian of SO(3) exp.
pub fn so3_right_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    let (_, a, b) = rodrigues_coeffs(theta);
    Matrix3::identity() - k * a + k * k * b
}

pub fn so3_right_jacobian_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    let c = inverse_coeff(theta);
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Translation coupling block of the left SE(3) Jacobian at `(ρ, φ)`.
fn se3_q(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let t2 = theta * theta;
    let (c1, c2, c3) = if theta < SERIES_ANGLE {
        let t4 = t2 * t2;
        (
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
            1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0,
            1.0 / 120.0 - t2 / 2520.0 + t4 / 113400.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (
            (theta - s) / (t2 * theta),
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
        )
    };
    let p = skew(phi);
    let r = skew(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2 + (prp * p + p * prp) * c3
}

/// `V(ω)` with `exp([ρ, ω]).translation = V ρ`.
fn so3_v(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    let (_, a, b) = rodrigues_coeffs(theta);
    Matrix3::identity() + k * a + k * k * b
}

fn so3_v_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = skew(w);
    let c = inverse_coeff(theta);
    Matrix3::identity() - k * 0.5 + k * k * c
}

// ---------------------------------------------------------------------------
// SE(3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Se3 {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl PartialEq for Se3 {
    fn eq(&self, other: &Self) -> bool {
        self.translation == other.translation && self.rotation.coords == other.rotation.coords
    }
}

impl Se3 {
    /// The rotation is renormalized and mapped to the `qw ≥ 0` hemisphere.
    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation: canonical(rotation) }
    }

    /// From `(x, y, z, qx, qy, qz, qw)`; the quaternion need not be normalized.
    pub fn from_components(t: [f64; 3], q: [f64; 4]) -> Self {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        Self::new(Vector3::from(t), UnitQuaternion::new_normalize(quat))
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// `(qx, qy, qz, qw)`
    pub fn quaternion_xyzw(&self) -> [f64; 4] {
        let q = &self.rotation;
        [q.i, q.j, q.k, q.w]
    }

    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotation_angle(&self) -> f64 {
        so3_angle(&self.rotation)
    }

    /// Logarithm that refuses poses within `1e-9` of a half-turn, where the
    /// rotation part is ambiguous.
    pub fn try_log(&self) -> Result<Tangent<6>, LieError> {
        let angle = self.rotation_angle();
        if angle >= PI - 1e-9 {
            return Err(LieError::AngleNearPi(angle));
        }
        Ok(self.log())
    }

    /// Rotation comparison that ignores quaternion sign.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.translation - other.translation).norm() <= tol && self.rotation.angle_to(&other.rotation) <= tol
    }
}

impl LieGroup<6> for Se3 {
    fn identity() -> Self {
        Self { translation: Vector3::zeros(), rotation: UnitQuaternion::identity() }
    }

    fn compose(&self, other: &Self) -> Self {
        Se3::new(self.act(&other.translation), self.rotation * other.rotation)
    }

    fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Se3::new(-(r_inv * self.translation), r_inv)
    }

    fn exp(t: &Tangent<6>) -> Self {
        let rho = Vector3::new(t[0], t[1], t[2]);
        let w = Vector3::new(t[3], t[4], t[5]);
        Se3::new(so3_v(&w) * rho, so3_exp(&w))
    }

    fn log(&self) -> Tangent<6> {
        let w = so3_log(&self.rotation);
        let rho = so3_v_inv(&w) * self.translation;
        Vector6::new(rho.x, rho.y, rho.z, w.x, w.y, w.z)
    }

    fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation.to_rotation_matrix().into_inner();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&(skew(&self.translation) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    fn right_jacobian_inv(t: &Tangent<6>) -> Matrix6<f64> {
        let rho = Vector3::new(t[0], t[1], t[2]);
        let w = Vector3::new(t[3], t[4], t[5]);
        // Jr(ρ, ω) = [[Jr_so3(ω), Q(-ρ, -ω)], [0, Jr_so3(ω)]]
        let a_inv = so3_right_jacobian_inv(&w);
        let q = se3_q(&(-rho), &(-w));
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&a_inv);
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-(a_inv * q * a_inv)));
        out.fixed_view_mut::<3, 3>(3, 3).copy_from(&a_inv);
        out
    }

    fn translation3(&self) -> Vector3<f64> {
        self.translation
    }

    fn to_se3(&self) -> Se3 {
        *self
    }
}
