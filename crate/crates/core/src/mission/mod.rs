//! Maneuver sequencing, controller selection, the safety monitor with its
//! hold-pose fallback, and fault injection.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{apply_limits, Wrench};
use crate::baseline::{hold_pose_controller, pd_wrench, HoldPose, PdGains};
use crate::control::Controller;
use crate::dynamics::{self, DynamicsError, RigidState};
use crate::env::{observe, Env, EpisodeGoal, Observation};
use crate::learn::PolicyNet;
use crate::math3d::{quat_error, Quat, Vec3};

pub mod log;
pub mod sequence;

pub use log::{
    compare_metrics, episode_log, metrics, write_error_table, ControlMode, LogRow, MetricError, MetricReport, Metrics,
    SettleTolerance, TrajectoryLog, LOG_COLUMNS,
};
pub use sequence::{parse_sequence, stock_sequence, Maneuver, ManeuverKind, ParseError, Target, STOCK_SEQUENCE};

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("maneuver {index}: {source}")]
    Dynamics {
        index: usize,
        #[source]
        source: DynamicsError,
    },
    #[error("maneuver {index}: state became non-finite")]
    NonFinite { index: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("invalid mission config: {0}")]
    Config(String),
}

/// Safety monitor limits, applied to deviation from the maneuver corridor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyThresholds {
    /// m
    pub max_pos_err: f64,
    /// rad
    pub max_ori_err: f64,
    /// m/s
    pub max_lin_vel: f64,
    /// rad/s
    pub max_ang_vel: f64,
    /// Consecutive violating ticks before the fallback engages.
    pub trip_consecutive: u32,
    /// How long the fallback holds before the maneuver is closed out, s.
    pub fallback_hold_s: f64,
}

impl Default for SafetyThresholds {
    fn default() -> Self {
        Self {
            max_pos_err: 0.25,
            max_ori_err: 30f64.to_radians(),
            max_lin_vel: 0.5,
            max_ang_vel: 1.0,
            trip_consecutive: 3,
            fallback_hold_s: 20.0,
        }
    }
}

impl SafetyThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let v = [self.max_pos_err, self.max_ori_err, self.max_lin_vel, self.max_ang_vel, self.fallback_hold_s];
        if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) || self.trip_consecutive == 0 {
            return Err("safety thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Magnitudes the safety monitor compares against its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Deviation {
    pub pos: f64,
    pub ori: f64,
    pub lin_vel: f64,
    pub ang_vel: f64,
}

impl Deviation {
    /// Plain goal-relative errors.
    pub fn from_observation(obs: &Observation) -> Self {
        Self { pos: obs.pos_err.norm(), ori: obs.ori_err.norm(), lin_vel: obs.lin_vel.norm(), ang_vel: obs.ang_vel.norm() }
    }
}

/// Deviation from the straight corridor between the maneuver's entry pose
/// and its goal. Position deviation is the distance from the entry→goal
/// segment; attitude deviation is how far the attitude error has grown past
/// its value at entry. With entry equal to goal both reduce to plain errors.
pub fn corridor_deviation(state: &RigidState, entry: &EpisodeGoal, goal: &EpisodeGoal) -> Deviation {
    let seg = goal.position - entry.position;
    let rel = state.position - entry.position;
    let len2 = seg.norm_squared();
    let s = if len2 > 0.0 { (rel.dot(seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let entry_ori = quat_error(goal.attitude, entry.attitude).norm();
    let ori = quat_error(goal.attitude, state.attitude).norm();
    Deviation {
        pos: (rel - seg * s).norm(),
        ori: (ori - entry_ori).max(0.0),
        lin_vel: state.lin_vel.norm(),
        ang_vel: state.ang_vel.norm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyDecision {
    Nominal,
    Fallback,
}

/// One tick of the trip counter: counts consecutive violating ticks, resets
/// on a clean one, and calls for the fallback once the count is reached.
pub fn safety_check(dev: &Deviation, th: &SafetyThresholds, trip_counter: u32) -> (SafetyDecision, u32) {
    let violated = dev.pos > th.max_pos_err
        || dev.ori > th.max_ori_err
        || dev.lin_vel > th.max_lin_vel
        || dev.ang_vel > th.max_ang_vel;
    let counter = if violated { trip_counter + 1 } else { 0 };
    let decision = if counter >= th.trip_consecutive { SafetyDecision::Fallback } else { SafetyDecision::Nominal };
    (decision, counter)
}

/// Localization fault: the perceived pose is offset from the true pose from
/// `tick` (counted from the maneuver start) until the maneuver ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    /// 1-based sequence position.
    pub maneuver: usize,
    pub tick: u64,
    /// m, world frame.
    #[serde(default)]
    pub position_offset: [f64; 3],
    /// Rotation vector, rad, world frame.
    #[serde(default)]
    pub attitude_offset: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPlan {
    #[serde(default)]
    pub fault: Vec<Fault>,
}

impl FaultPlan {
    /// The docking-attempt localization fault: a 0.5 m lateral jump part
    /// way through the first dock (sequence item 6).
    pub fn dock_attempt() -> Self {
        Self {
            fault: vec![Fault { maneuver: 6, tick: 150, position_offset: [0.0, 0.5, 0.0], attitude_offset: [0.0; 3] }],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
    }

    /// What onboard navigation reports at `tick` of maneuver `index`.
    pub fn perceive(&self, state: &RigidState, index: usize, tick: u64) -> RigidState {
        let mut s = *state;
        for f in self.fault.iter().filter(|f| f.maneuver == index && tick >= f.tick) {
            s.position = s.position + Vec3::from_array(f.position_offset);
            s.attitude = Quat::from_rotation_vector(Vec3::from_array(f.attitude_offset)).hamilton(s.attitude).normalized();
        }
        s
    }
}

/// Mission-level settings beyond the task definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionParams {
    /// Standoff of the pre-dock pose along the dock's +X axis, m.
    pub dock_standoff: f64,
    pub dock_pos_tol: f64,
    /// rad
    pub dock_ori_tol: f64,
    /// Position error handed to the policy is capped at this length, m, so
    /// long moves stay inside the trained goal range.
    pub rl_max_pos_err: f64,
    /// Same for the attitude error, rad.
    pub rl_max_ori_err: f64,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self {
            dock_standoff: 0.3,
            dock_pos_tol: 0.02,
            dock_ori_tol: 2f64.to_radians(),
            rl_max_pos_err: 0.5,
            rl_max_ori_err: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionConfig {
    /// Time step, DOF mask, actuation limits, nominal body, observation
    /// frame, success tolerances and hold length.
    pub env: Env,
    pub gains: PdGains,
    pub hold_gains: PdGains,
    pub safety: SafetyThresholds,
    pub params: MissionParams,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            env: Env::default(),
            gains: PdGains::default(),
            hold_gains: PdGains::hold(),
            safety: SafetyThresholds::default(),
            params: MissionParams::default(),
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        self.env.validate().map_err(|e| MissionError::Config(e.to_string()))?;
        self.gains.validate().map_err(MissionError::Config)?;
        self.hold_gains.validate().map_err(MissionError::Config)?;
        self.safety.validate().map_err(MissionError::Config)?;
        let p = &self.params;
        if [p.dock_standoff, p.dock_pos_tol, p.dock_ori_tol, p.rl_max_pos_err, p.rl_max_ori_err]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(MissionError::Config("mission parameters must be positive".into()));
        }
        Ok(())
    }

    fn tolerances(&self, kind: ManeuverKind) -> (f64, f64) {
        match kind {
            ManeuverKind::Dock => (self.params.dock_pos_tol, self.params.dock_ori_tol),
            _ => (self.env.config.success_pos_tol, self.env.config.success_ori_tol),
        }
    }
}

/// Which controller flies the nominal part of each maneuver.
#[derive(Debug, Clone, Copy)]
pub enum Pilot<'a> {
    Rl(&'a PolicyNet),
    Baseline,
}

impl Pilot<'_> {
    pub fn mode(&self) -> ControlMode {
        match self {
            Pilot::Rl(_) => ControlMode::RlPolicy,
            Pilot::Baseline => ControlMode::Baseline,
        }
    }
}

/// The trained policy with its inputs capped to the trained goal range.
#[derive(Debug, Clone, Copy)]
pub struct MissionRl<'a> {
    pub policy: &'a PolicyNet,
    pub env: &'a Env,
    pub max_pos_err: f64,
    pub max_ori_err: f64,
}

fn cap(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

impl Controller for MissionRl<'_> {
    fn command(&self, state: &RigidState, goal: &EpisodeGoal, _obs: &Observation) -> Wrench {
        let mut obs = self.env.observe(state, goal);
        obs.pos_err = cap(obs.pos_err, self.max_pos_err);
        obs.ori_err = cap(obs.ori_err, self.max_ori_err);
        crate::actuation::denormalize_action(&self.policy.mean_action(&obs), &self.env.limits)
    }
}

/// Goal pose of `m` entered from `entry`, with `dock` as the reference pose.
pub fn maneuver_goal(m: &Maneuver, entry: &EpisodeGoal, dock: &EpisodeGoal, cfg: &MissionConfig) -> EpisodeGoal {
    let mask = cfg.env.config.mask();
    let (base, offset, rotation) = match m.target {
        Target::Relative { offset, rotation } => (entry, offset, rotation),
        Target::Absolute { position, rotation } => (dock, position, rotation),
        Target::DockApproach => (dock, Vec3::X * cfg.params.dock_standoff, Vec3::ZERO),
        Target::Dock => (dock, Vec3::ZERO, Vec3::ZERO),
    };
    let world_offset = mask.apply_translation(base.attitude.rotate(offset));
    let world_rot = mask.apply_rotation(base.attitude.rotate(rotation));
    EpisodeGoal {
        position: base.position + world_offset,
        attitude: Quat::from_rotation_vector(world_rot).hamilton(base.attitude).normalized(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    FallbackTriggered,
    Timeout,
    Skipped,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::FallbackTriggered => "fallback_triggered",
            Outcome::Timeout => "timeout",
            Outcome::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverRecord {
    pub index: usize,
    pub maneuver: Maneuver,
    pub goal: EpisodeGoal,
    pub outcome: Outcome,
    /// Global tick at maneuver start.
    pub start_tick: u64,
    pub ticks: u64,
    pub final_state: RigidState,
    /// True (not perceived) errors at the end of the maneuver.
    pub final_pos_err: f64,
    pub final_ori_err: f64,
    /// Seconds into the maneuver at which the fallback engaged.
    pub fallback_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverRun {
    pub record: ManeuverRecord,
    pub log: TrajectoryLog,
}

/// Flies one maneuver closed loop. Each tick: perceive → safety check (RL
/// only) → controller → limits → propagate → log.
#[allow(clippy::too_many_arguments)]
pub fn run_maneuver(
    state: &RigidState,
    dock: &EpisodeGoal,
    maneuver: &Maneuver,
    index: usize,
    pilot: Pilot<'_>,
    cfg: &MissionConfig,
    faults: &FaultPlan,
    start_tick: u64,
) -> Result<ManeuverRun, MissionError> {
    let env = &cfg.env;
    let dt = env.config.dt;
    let mask = env.config.mask();
    let body = env.body;
    let (pos_tol, ori_tol) = cfg.tolerances(maneuver.kind);
    let max_ticks = (maneuver.timeout / dt).ceil() as u64;
    let fallback_ticks = (cfg.safety.fallback_hold_s / dt).ceil() as u64;

    let entry_perceived = faults.perceive(state, index, 0);
    let entry = EpisodeGoal::from_state(&entry_perceived);
    let goal = maneuver_goal(maneuver, &EpisodeGoal::from_state(state), dock, cfg);

    let rl = match pilot {
        Pilot::Rl(policy) => Some(MissionRl {
            policy,
            env,
            max_pos_err: cfg.params.rl_max_pos_err,
            max_ori_err: cfg.params.rl_max_ori_err,
        }),
        Pilot::Baseline => None,
    };

    let mut truth = *state;
    let mut mode = pilot.mode();
    let mut trip = 0u32;
    let mut hold: Option<(HoldPose, u64)> = None;
    let mut streak = 0usize;
    let mut prev = Wrench::ZERO;
    let mut log = TrajectoryLog::default();
    let outcome;
    let mut k = 0u64;
    loop {
        let perceived = faults.perceive(&truth, index, k);
        if mode == ControlMode::RlPolicy {
            let dev = corridor_deviation(&perceived, &entry, &goal);
            let (decision, counter) = safety_check(&dev, &cfg.safety, trip);
            trip = counter;
            if decision == SafetyDecision::Fallback {
                mode = ControlMode::HoldFallback;
                hold = Some((hold_pose_controller(&perceived, cfg.hold_gains, env.limits), k));
            }
        }
        let obs = observe(&perceived, &goal);
        let cmd = match (mode, &rl, &hold) {
            (ControlMode::HoldFallback, _, Some((h, _))) => h.command(&perceived, &goal, &obs),
            (ControlMode::RlPolicy, Some(rl), _) => rl.command(&perceived, &goal, &obs),
            _ => pd_wrench(&perceived, &goal, &cfg.gains, &env.limits),
        };
        let applied = apply_limits(&prev, &cmd, &env.limits, dt);
        truth = dynamics::step(&truth, &applied, &body, &mask, dt)
            .map_err(|source| MissionError::Dynamics { index, source })?;
        if !truth.is_finite() {
            return Err(MissionError::NonFinite { index });
        }
        prev = applied;
        k += 1;

        let seen = faults.perceive(&truth, index, k);
        let err = observe(&seen, &goal);
        log.rows.push(LogRow {
            t: (start_tick + k) as f64 * dt,
            state: seen,
            applied,
            commanded: cmd,
            pos_err: err.pos_err,
            ori_err: err.ori_err,
            mode,
            maneuver: index,
        });

        if let Some((_, at)) = hold {
            if k - at >= fallback_ticks {
                outcome = Outcome::FallbackTriggered;
                break;
            }
            continue;
        }
        streak = if env.config.within(&err, pos_tol, ori_tol) { streak + 1 } else { 0 };
        if streak >= env.config.hold_steps {
            outcome = Outcome::Success;
            break;
        }
        if k >= max_ticks {
            outcome = Outcome::Timeout;
            break;
        }
    }

    let true_err = observe(&truth, &goal);
    Ok(ManeuverRun {
        record: ManeuverRecord {
            index,
            maneuver: maneuver.clone(),
            goal,
            outcome,
            start_tick,
            ticks: k,
            final_state: truth,
            final_pos_err: true_err.pos_err.norm(),
            final_ori_err: true_err.ori_err.norm(),
            fallback_time: hold.map(|(_, at)| at as f64 * dt),
        },
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub records: Vec<ManeuverRecord>,
    pub log: TrajectoryLog,
}

impl SequenceRun {
    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.outcome == Outcome::Success).count()
    }

    /// Outcome table in sequence order, one row per maneuver.
    pub fn write_outcomes<W: Write>(&self, out: W, dt: f64) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "item", "maneuver", "outcome", "start_s", "duration_s", "final_pos_err_m", "final_ori_err_deg",
            "final_speed_mps", "fallback_at_s", "resume", "telemetry",
        ])?;
        for r in &self.records {
            let skipped = r.outcome == Outcome::Skipped;
            let num = |v: f64| if skipped { String::new() } else { format!("{v:.6}") };
            w.write_record([
                r.index.to_string(),
                r.maneuver.label.clone(),
                r.outcome.name().to_string(),
                num(r.start_tick as f64 * dt),
                num(r.ticks as f64 * dt),
                num(r.final_pos_err),
                num(r.final_ori_err.to_degrees()),
                num(r.final_state.lin_vel.norm()),
                r.fallback_time.map(|t| format!("{t:.3}")).unwrap_or_default(),
                r.maneuver.resume.to_string(),
                if r.maneuver.loss_of_signal { "blackout" } else { "nominal" }.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flies `sequence` in order from `start`, which is also the dock pose.
/// After a fallback the sequence pauses: the next item runs only if it
/// carries the resume flag, otherwise it and everything after are skipped.
pub fn run_sequence(
    start: &RigidState,
    sequence: &[Maneuver],
    pilot: Pilot<'_>,
    cfg: &MissionConfig,
    faults: &FaultPlan,
) -> Result<SequenceRun, MissionError> {
    if sequence.is_empty() {
        return Err(MissionError::EmptySequence);
    }
    cfg.validate()?;
    let dock = EpisodeGoal::from_state(start);
    let mut state = *start;
    let mut tick = 0u64;
    let mut paused = false;
    let mut records = Vec::with_capacity(sequence.len());
    let mut log = TrajectoryLog::default();
    for (i, m) in sequence.iter().enumerate() {
        let index = i + 1;
        if paused && !m.resume {
            // once paused, nothing further runs
            for (j, rest) in sequence.iter().enumerate().skip(i) {
                let entry = EpisodeGoal::from_state(&state);
                records.push(ManeuverRecord {
                    index: j + 1,
                    maneuver: rest.clone(),
                    goal: maneuver_goal(rest, &entry, &dock, cfg),
                    outcome: Outcome::Skipped,
                    start_tick: tick,
                    ticks: 0,
                    final_state: state,
                    final_pos_err: f64::NAN,
                    final_ori_err: f64::NAN,
                    fallback_time: None,
                });
            }
            break;
        }
        let run = run_maneuver(&state, &dock, m, index, pilot, cfg, faults, tick)?;
        tick += run.record.ticks;
        state = run.record.final_state;
        paused = run.record.outcome == Outcome::FallbackTriggered;
        log.extend(&run.log);
        records.push(run.record);
    }
    Ok(SequenceRun { records, log })
}
