//! Zero-G rigid-body propagation of the free-flyer.
//!
//! The step is semi-implicit: momenta are advanced first from the applied
//! wrench, then the pose is advanced with the updated velocities. Angular
//! momentum is carried in the world frame during the step, so a torque-free
//! body keeps it constant to rounding while the gyroscopic coupling
//! `ω × (Iω)` appears through the changing attitude.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::Wrench;
use crate::math3d::{quat_integrate, Quat, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time step {0} s outside (0, 0.5]")]
    BadTimeStep(f64),
    #[error("non-finite wrench command")]
    NonFiniteWrench,
    #[error("simulation blow-up: non-finite state after step")]
    BlowUp,
    #[error("invalid body parameters: {0}")]
    BadBody(String),
}

/// Pose and twist. Attitude maps body to world, linear velocity is in the
/// world frame and angular velocity in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidState {
    pub position: Vec3,
    pub attitude: Quat,
    pub lin_vel: Vec3,
    pub ang_vel: Vec3,
}

impl Default for RigidState {
    fn default() -> Self {
        Self::at_rest(Vec3::ZERO, Quat::IDENTITY)
    }
}

impl RigidState {
    pub fn at_rest(position: Vec3, attitude: Quat) -> Self {
        Self { position, attitude, lin_vel: Vec3::ZERO, ang_vel: Vec3::ZERO }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.attitude.is_finite()
            && self.lin_vel.is_finite()
            && self.ang_vel.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyParams {
    /// kg
    pub mass: f64,
    /// Principal moments, kg·m².
    pub inertia_diag: Vec3,
    /// Centre-of-mass offset from the wrench reference point, body frame, m.
    pub com_offset: Vec3,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            mass: 9.5,
            inertia_diag: Vec3::new(0.15, 0.14, 0.16),
            com_offset: Vec3::ZERO,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let i = self.inertia_diag;
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(DynamicsError::BadBody(format!("mass {} must be positive", self.mass)));
        }
        if !(i.x > 0.0 && i.y > 0.0 && i.z > 0.0 && i.is_finite()) {
            return Err(DynamicsError::BadBody("inertia components must be positive".into()));
        }
        if i.x + i.y < i.z || i.y + i.z < i.x || i.x + i.z < i.y {
            return Err(DynamicsError::BadBody("inertia violates triangle inequality".into()));
        }
        if !self.com_offset.is_finite() {
            return Err(DynamicsError::BadBody("com_offset must be finite".into()));
        }
        Ok(())
    }

    /// Same body with mass and inertia scaled by `factor`.
    pub fn with_mass_scale(&self, factor: f64) -> Self {
        Self { mass: self.mass * factor, inertia_diag: self.inertia_diag * factor, ..*self }
    }
}

/// Which degrees of freedom are free. Translation axes are world axes,
/// rotation axes are body axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofMask {
    pub free_translation: [bool; 3],
    pub free_rotation: [bool; 3],
}

impl DofMask {
    pub const FULL_6DOF: DofMask = DofMask { free_translation: [true; 3], free_rotation: [true; 3] };
    /// Air-bearing table: x/y translation and yaw only.
    pub const GRANITE_3DOF: DofMask =
        DofMask { free_translation: [true, true, false], free_rotation: [false, false, true] };

    pub fn apply_translation(&self, v: Vec3) -> Vec3 {
        mask3(v, self.free_translation)
    }

    pub fn apply_rotation(&self, v: Vec3) -> Vec3 {
        mask3(v, self.free_rotation)
    }

    pub fn is_full(&self) -> bool {
        *self == Self::FULL_6DOF
    }
}

impl Default for DofMask {
    fn default() -> Self {
        Self::FULL_6DOF
    }
}

fn mask3(v: Vec3, free: [bool; 3]) -> Vec3 {
    Vec3::new(
        if free[0] { v.x } else { 0.0 },
        if free[1] { v.y } else { 0.0 },
        if free[2] { v.z } else { 0.0 },
    )
}

/// Advances the free-flyer by one step of `dt` seconds under a body-frame wrench.
pub fn step(
    state: &RigidState,
    wrench: &Wrench,
    params: &BodyParams,
    mask: &DofMask,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    if !(dt > 0.0 && dt <= 0.5) {
        return Err(DynamicsError::BadTimeStep(dt));
    }
    if !wrench.is_finite() {
        return Err(DynamicsError::NonFiniteWrench);
    }
    let q = state.attitude;
    let inertia = params.inertia_diag;

    // translation
    let force_world = q.rotate(wrench.force);
    let accel = mask.apply_translation(force_world / params.mass);
    let lin_vel = mask.apply_translation(state.lin_vel + accel * dt);
    let position = state.position + lin_vel * dt;

    // rotation: torque about the centre of mass includes r × F
    let torque_body = wrench.torque + params.com_offset.cross(wrench.force);
    let ang_vel = mask.apply_rotation(state.ang_vel);
    let momentum_world = q.rotate(inertia.hadamard(ang_vel)) + q.rotate(torque_body) * dt;
    let ang_vel_mid = mask.apply_rotation(body_rate(q, momentum_world, inertia));
    let attitude = quat_integrate(q, ang_vel_mid, dt);
    let ang_vel = if mask.is_full() {
        body_rate(attitude, momentum_world, inertia)
    } else {
        // constrained rotations exchange momentum with the support
        ang_vel_mid
    };

    let next = RigidState { position, attitude, lin_vel, ang_vel };
    if !next.is_finite() {
        return Err(DynamicsError::BlowUp);
    }
    Ok(next)
}

fn body_rate(q: Quat, momentum_world: Vec3, inertia: Vec3) -> Vec3 {
    let l_body = q.inverse_rotate(momentum_world);
    Vec3::new(l_body.x / inertia.x, l_body.y / inertia.y, l_body.z / inertia.z)
}

/// Translational plus rotational kinetic energy, J.
pub fn kinetic_energy(state: &RigidState, params: &BodyParams) -> f64 {
    let w = state.ang_vel;
    0.5 * params.mass * state.lin_vel.norm_squared() + 0.5 * w.dot(params.inertia_diag.hadamard(w))
}

/// Linear momentum and world-frame angular momentum about the centre of mass.
pub fn momentum(state: &RigidState, params: &BodyParams) -> (Vec3, Vec3) {
    let linear = state.lin_vel * params.mass;
    let angular = state.attitude.rotate(params.inertia_diag.hadamard(state.ang_vel));
    (linear, angular)
}
