//! Closed-loop behavior of the PD baseline and the hold-pose fallback.

use apiary::actuation::{apply_limits, ActuationLimits, Wrench};
use apiary::baseline::{hold_pose_controller, pd_wrench, PdController, PdGains};
use apiary::control::Controller;
use apiary::dynamics::{self, BodyParams, DofMask, RigidState};
use apiary::env::{observe, EpisodeGoal};
use apiary::math3d::{Quat, Vec3};

const DT: f64 = 0.016;

fn fly(ctrl: &dyn Controller, start: RigidState, goal: &EpisodeGoal, seconds: f64) -> Vec<RigidState> {
    let limits = ActuationLimits::default();
    let body = BodyParams::default();
    let mut s = start;
    let mut prev = Wrench::ZERO;
    let mut out = vec![s];
    for _ in 0..(seconds / DT).round() as usize {
        let cmd = ctrl.command(&s, goal, &observe(&s, goal));
        let w = apply_limits(&prev, &cmd, &limits, DT);
        assert!(w.within(&limits));
        s = dynamics::step(&s, &w, &body, &DofMask::FULL_6DOF, DT).unwrap();
        prev = w;
        out.push(s);
    }
    out
}

fn undock_goal() -> EpisodeGoal {
    EpisodeGoal { position: Vec3::new(0.5, 0.0, 0.0), attitude: Quat::IDENTITY }
}

#[test]
fn undock_completes_within_thirty_seconds() {
    let ctrl = PdController { gains: PdGains::default(), limits: ActuationLimits::default() };
    let traj = fly(&ctrl, RigidState::default(), &undock_goal(), 30.0);
    let last = observe(traj.last().unwrap(), &undock_goal());
    assert!(last.pos_err.norm() < 0.01, "final pos err {}", last.pos_err.norm());
    assert!(last.ori_err.norm() < 0.5f64.to_radians());
}

#[test]
fn undock_path_is_straight() {
    let ctrl = PdController { gains: PdGains::default(), limits: ActuationLimits::default() };
    for s in fly(&ctrl, RigidState::default(), &undock_goal(), 30.0) {
        assert!(s.position.y.abs() < 1e-6 && s.position.z.abs() < 1e-6);
    }
}

#[test]
fn critically_damped_step_does_not_overshoot() {
    let ctrl = PdController { gains: PdGains::default(), limits: ActuationLimits::default() };
    let traj = fly(&ctrl, RigidState::default(), &undock_goal(), 60.0);
    let peak = traj.iter().map(|s| s.position.x).fold(f64::MIN, f64::max);
    assert!(peak < 0.5 * 1.01, "peak {peak}");
}

#[test]
fn error_decreases_monotonically_after_transient() {
    let ctrl = PdController { gains: PdGains::default(), limits: ActuationLimits::default() };
    let traj = fly(&ctrl, RigidState::default(), &undock_goal(), 30.0);
    let errs: Vec<f64> = traj.iter().map(|s| observe(s, &undock_goal()).pos_err.norm()).collect();
    for w in errs[1..].windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
}

#[test]
fn hold_arrests_drift() {
    let drifting = RigidState { lin_vel: Vec3::new(0.05, 0.0, 0.0), ..RigidState::default() };
    let hold = hold_pose_controller(&drifting, PdGains::hold(), ActuationLimits::default());
    let first = hold.command(&drifting, &undock_goal(), &observe(&drifting, &undock_goal()));
    assert!(first.force.x < 0.0);
    let traj = fly(&hold, drifting, &undock_goal(), 10.0);
    let v = traj.last().unwrap().lin_vel.norm();
    assert!(v < 0.005, "speed after 10 s: {v}");
}

#[test]
fn hold_at_rest_is_silent() {
    let s = RigidState::at_rest(Vec3::new(0.2, 0.1, -0.3), Quat::from_rotation_vector(Vec3::new(0.0, 0.3, 0.1)));
    let hold = hold_pose_controller(&s, PdGains::hold(), ActuationLimits::default());
    for r in fly(&hold, s, &undock_goal(), 5.0) {
        assert_eq!(r, s);
    }
}

#[test]
fn hold_matches_pd_with_captured_goal() {
    let s = RigidState { lin_vel: Vec3::new(0.01, -0.02, 0.0), ..RigidState::default() };
    let later = RigidState { position: Vec3::new(0.05, 0.0, 0.01), ..s };
    let gains = PdGains::hold();
    let limits = ActuationLimits::default();
    let hold = hold_pose_controller(&s, gains, limits);
    let goal = EpisodeGoal::from_state(&s);
    assert_eq!(hold.command(&later, &undock_goal(), &observe(&later, &goal)), pd_wrench(&later, &goal, &gains, &limits));
}

#[test]
fn zero_wrench_only_at_equilibrium() {
    let gains = PdGains::default();
    let limits = ActuationLimits::default();
    let goal = undock_goal();
    let at_goal = RigidState::at_rest(goal.position, goal.attitude);
    assert_eq!(pd_wrench(&at_goal, &goal, &gains, &limits), Wrench::ZERO);
    for off in [
        RigidState { position: Vec3::new(0.49, 0.0, 0.0), ..at_goal },
        RigidState { lin_vel: Vec3::new(0.0, 1e-3, 0.0), ..at_goal },
        RigidState { ang_vel: Vec3::new(0.0, 0.0, 1e-3), ..at_goal },
        RigidState { attitude: Quat::from_rotation_vector(Vec3::new(1e-3, 0.0, 0.0)), ..at_goal },
    ] {
        assert_ne!(pd_wrench(&off, &goal, &gains, &limits), Wrench::ZERO);
    }
}
