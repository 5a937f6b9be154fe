//! Quaternion and 3-vector algebra.
//!
//! Quaternions are scalar-first (`w, x, y, z`) with the Hamilton product.
//! Attitudes map body coordinates to world coordinates. Orientation error is
//! carried as a rotation vector (axis times angle, radians) so observations
//! stay fixed-size and free of the double-cover sign ambiguity.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rotation axis has zero length")]
    ZeroAxis,
    #[error("quaternion is not unit-norm (|q| = {0})")]
    NotUnit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Component-wise product.
    pub fn hadamard(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Unit quaternion, scalar first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components and normalizes it.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, MathError> {
        let q = Quat { w, x, y, z };
        if !q.is_finite() {
            return Err(MathError::NonFinite("quaternion"));
        }
        let n = q.norm();
        if n < 1e-300 {
            return Err(MathError::NotUnit(n));
        }
        Ok(q.scaled(1.0 / n))
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, MathError> {
        quat_from_axis_angle(axis, angle)
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: Vec3) -> Quat {
        let angle = v.norm();
        if angle < 1e-12 {
            // second-order series keeps small rotations exact to rounding
            let half = v * 0.5;
            return Quat { w: 1.0 - half.norm_squared() * 0.5, x: half.x, y: half.y, z: half.z }
                .normalized();
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let a = v / angle;
        Quat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }.normalized()
    }

    pub fn conj(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        self.scaled(1.0 / self.norm())
    }

    /// Flips sign so that `w >= 0`.
    pub fn canonical(self) -> Quat {
        if self.w < 0.0 {
            self.scaled(-1.0)
        } else {
            self
        }
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Raw Hamilton product without renormalization.
    pub fn hamilton(self, b: Quat) -> Quat {
        let a = self;
        Quat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    /// Rotates a body-frame vector into the world frame.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotates a world-frame vector into the body frame.
    pub fn inverse_rotate(self, v: Vec3) -> Vec3 {
        self.conj().rotate(v)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        let q = self.canonical();
        2.0 * q.vector().norm().atan2(q.w)
    }

    /// Logarithm map: rotation vector with angle in `[0, π]`.
    pub fn to_rotation_vector(self) -> Vec3 {
        let q = self.canonical();
        let s = q.vector().norm();
        if s < 1e-12 {
            // angle ≈ 2s/w, axis = v/s
            return q.vector() * (2.0 / q.w);
        }
        let angle = 2.0 * s.atan2(q.w);
        q.vector() * (angle / s)
    }

    fn scaled(self, s: f64) -> Quat {
        Quat { w: self.w * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }
}

impl Mul for Quat {
    type Output = Quat;
    /// Hamilton product, renormalized.
    fn mul(self, b: Quat) -> Quat {
        self.hamilton(b).normalized()
    }
}

fn check_unit(q: Quat, what: &'static str) -> Result<(), MathError> {
    if !q.is_finite() {
        return Err(MathError::NonFinite(what));
    }
    let n = q.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(MathError::NotUnit(n));
    }
    Ok(())
}

/// Checked Hamilton product `a ⊗ b`.
pub fn quat_mul(a: Quat, b: Quat) -> Result<Quat, MathError> {
    check_unit(a, "quat_mul lhs")?;
    check_unit(b, "quat_mul rhs")?;
    Ok(a * b)
}

pub fn quat_from_axis_angle(axis: Vec3, angle: f64) -> Result<Quat, MathError> {
    if !axis.is_finite() || !angle.is_finite() {
        return Err(MathError::NonFinite("axis-angle"));
    }
    let n = axis.norm();
    if n == 0.0 {
        return Err(MathError::ZeroAxis);
    }
    let (s, c) = (angle * 0.5).sin_cos();
    let a = axis / n;
    Ok(Quat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }.normalized())
}

/// Rotation vector of `goal ⊗ conj(current)`, expressed in the world frame,
/// with the angle canonicalized into `[0, π]`.
pub fn quat_error(goal: Quat, current: Quat) -> Vec3 {
    goal.hamilton(current.conj()).to_rotation_vector()
}

/// Advances `q` by a constant body-frame rate `omega` over `dt`.
pub fn quat_integrate(q: Quat, omega: Vec3, dt: f64) -> Quat {
    if omega == Vec3::ZERO {
        return q;
    }
    (q.hamilton(Quat::from_rotation_vector(omega * dt))).normalized()
}
