//! PD pose controller: the stand-in for the stock flight controller and the
//! hold-pose fallback.

use serde::{Deserialize, Serialize};

use crate::actuation::{clamp_wrench, ActuationLimits, Wrench};
use crate::control::Controller;
use crate::dynamics::RigidState;
use crate::env::{EpisodeGoal, Observation};
use crate::math3d::quat_error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdGains {
    /// N/m
    pub kp_pos: f64,
    /// N·s/m
    pub kd_pos: f64,
    /// N·m/rad
    pub kp_att: f64,
    /// N·m·s/rad
    pub kd_att: f64,
}

impl Default for PdGains {
    /// Critically damped for the nominal 9.5 kg body (kd = 2√(kp·m)).
    fn default() -> Self {
        Self { kp_pos: 0.6, kd_pos: 4.8, kp_att: 0.2, kd_att: 0.35 }
    }
}

impl PdGains {
    /// Stiffer gains used after a safety trip: ωn ≈ 0.6 rad/s in translation,
    /// so a 0.05 m/s drift is arrested well inside 10 s.
    pub fn hold() -> Self {
        Self { kp_pos: 3.5, kd_pos: 11.5, kp_att: 0.6, kd_att: 0.62 }
    }

    pub fn validate(&self) -> Result<(), String> {
        let g = [self.kp_pos, self.kd_pos, self.kp_att, self.kd_att];
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("PD gains must be finite and non-negative".into());
        }
        if (self.kp_pos > 0.0 && self.kd_pos <= 0.0) || (self.kp_att > 0.0 && self.kd_att <= 0.0) {
            return Err("a PD loop with kp > 0 needs kd > 0".into());
        }
        Ok(())
    }
}

/// Unclamped body-frame PD wrench.
pub fn pd_wrench_raw(state: &RigidState, goal: &EpisodeGoal, gains: &PdGains) -> Wrench {
    let q = state.attitude;
    let force_world = (goal.position - state.position) * gains.kp_pos - state.lin_vel * gains.kd_pos;
    let ori_err_body = q.inverse_rotate(quat_error(goal.attitude, q));
    Wrench {
        force: q.inverse_rotate(force_world),
        torque: ori_err_body * gains.kp_att - state.ang_vel * gains.kd_att,
    }
}

/// PD wrench clamped to the actuator magnitude limits.
pub fn pd_wrench(state: &RigidState, goal: &EpisodeGoal, gains: &PdGains, limits: &ActuationLimits) -> Wrench {
    clamp_wrench(&pd_wrench_raw(state, goal, gains), limits)
}

/// PD regulation to whatever goal the loop hands it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdController {
    pub gains: PdGains,
    pub limits: ActuationLimits,
}

impl Controller for PdController {
    fn command(&self, state: &RigidState, goal: &EpisodeGoal, _obs: &Observation) -> Wrench {
        pd_wrench(state, goal, &self.gains, &self.limits)
    }
}

/// PD regulation to a pose captured once; ignores the loop's goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldPose {
    pub captured: EpisodeGoal,
    pub gains: PdGains,
    pub limits: ActuationLimits,
}

impl Controller for HoldPose {
    fn command(&self, state: &RigidState, _goal: &EpisodeGoal, _obs: &Observation) -> Wrench {
        pd_wrench(state, &self.captured, &self.gains, &self.limits)
    }
}

/// Holds the pose of `captured` with zero twist.
pub fn hold_pose_controller(captured: &RigidState, gains: PdGains, limits: ActuationLimits) -> HoldPose {
    HoldPose { captured: EpisodeGoal::from_state(captured), gains, limits }
}
