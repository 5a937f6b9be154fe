//! Saturation model standing in for the fan force-allocation layer: turns
//! normalized policy outputs and raw controller commands into an executable
//! body-frame wrench.

use serde::{Deserialize, Serialize};

use crate::math3d::Vec3;

/// Body-frame force (N) and torque (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench { force: Vec3::ZERO, torque: Vec3::ZERO };

    pub fn is_finite(&self) -> bool {
        self.force.is_finite() && self.torque.is_finite()
    }

    pub fn to_array(&self) -> [f64; 6] {
        let (f, t) = (self.force, self.torque);
        [f.x, f.y, f.z, t.x, t.y, t.z]
    }

    pub fn within(&self, limits: &ActuationLimits) -> bool {
        let f = self.force.to_array();
        let t = self.torque.to_array();
        f.iter().all(|v| v.abs() <= limits.f_max) && t.iter().all(|v| v.abs() <= limits.tau_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuationLimits {
    /// Per-axis force bound, N.
    pub f_max: f64,
    /// Per-axis torque bound, N·m.
    pub tau_max: f64,
    /// Optional per-axis force slew bound, N/s.
    pub force_rate: Option<f64>,
    /// Optional per-axis torque slew bound, N·m/s.
    pub torque_rate: Option<f64>,
}

impl Default for ActuationLimits {
    fn default() -> Self {
        Self { f_max: 0.4, tau_max: 0.1, force_rate: None, torque_rate: None }
    }
}

impl ActuationLimits {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.f_max) || !positive(self.tau_max) {
            return Err("actuation limits must be positive".into());
        }
        if self.force_rate.is_some_and(|r| !positive(r)) || self.torque_rate.is_some_and(|r| !positive(r)) {
            return Err("rate limits must be positive when set".into());
        }
        Ok(())
    }
}

/// Scales a normalized 6-vector (clamped to [-1, 1]) into a wrench.
pub fn denormalize_action(action: &[f64; 6], limits: &ActuationLimits) -> Wrench {
    let a = action.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) });
    Wrench {
        force: Vec3::new(a[0], a[1], a[2]) * limits.f_max,
        torque: Vec3::new(a[3], a[4], a[5]) * limits.tau_max,
    }
}

/// Per-axis magnitude clamp only (NaN components become zero).
pub fn clamp_wrench(cmd: &Wrench, limits: &ActuationLimits) -> Wrench {
    Wrench { force: clamp_axes(cmd.force, limits.f_max), torque: clamp_axes(cmd.torque, limits.tau_max) }
}

/// Per-axis magnitude clamp, then the optional slew clamp relative to `prev`.
pub fn apply_limits(prev: &Wrench, cmd: &Wrench, limits: &ActuationLimits, dt: f64) -> Wrench {
    let mut force = clamp_axes(cmd.force, limits.f_max);
    let mut torque = clamp_axes(cmd.torque, limits.tau_max);
    if let Some(rate) = limits.force_rate {
        force = slew(prev.force, force, rate * dt);
    }
    if let Some(rate) = limits.torque_rate {
        torque = slew(prev.torque, torque, rate * dt);
    }
    // the slew target may start outside the bound if `prev` did
    Wrench { force: clamp_axes(force, limits.f_max), torque: clamp_axes(torque, limits.tau_max) }
}

fn clamp_axes(v: Vec3, bound: f64) -> Vec3 {
    v.map(|c| if c.is_nan() { 0.0 } else { c.clamp(-bound, bound) })
}

fn slew(prev: Vec3, target: Vec3, max_delta: f64) -> Vec3 {
    let prev = prev.map(|c| if c.is_finite() { c } else { 0.0 });
    let d = (target - prev).map(|c| c.clamp(-max_delta, max_delta));
    prev + d
}
