//! Episodic move-to-pose task for the free-flyer.
//!
//! Each episode starts at rest at the origin with identity attitude. The goal
//! pose and the body mass are drawn from the configured ranges. Observations
//! are pose error plus twist; the reward pays for reducing pose error and
//! charges for speed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{apply_limits, denormalize_action, ActuationLimits, Wrench};
use crate::dynamics::{self, BodyParams, DofMask, DynamicsError, RigidState};
use crate::math3d::{quat_error, Quat, Vec3};

pub mod vec_env;

pub use vec_env::{batch_rollout, ActionSource, EpisodeSummary, VecEnv};

pub const OBS_DIM: usize = 12;
pub const ACT_DIM: usize = 6;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("environment {index}: {source}")]
    InEnv {
        index: usize,
        #[source]
        source: DynamicsError,
    },
    #[error("invalid environment config: {0}")]
    Config(String),
}

/// Which test regime the simulator reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Zero-G, all six degrees of freedom.
    #[default]
    Iss6dof,
    /// Air-bearing table: planar translation and yaw.
    Granite3dof,
}

impl Scenario {
    pub fn mask(self) -> DofMask {
        match self {
            Scenario::Iss6dof => DofMask::FULL_6DOF,
            Scenario::Granite3dof => DofMask::GRANITE_3DOF,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Iss6dof => "iss6dof",
            Scenario::Granite3dof => "granite3dof",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iss6dof" => Ok(Scenario::Iss6dof),
            "granite3dof" => Ok(Scenario::Granite3dof),
            other => Err(format!("unknown scenario '{other}' (expected iss6dof or granite3dof)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Goal position drawn uniformly in ±range per axis, m.
    pub goal_pos_range: f64,
    /// Goal attitude rotation vector drawn uniformly in ±range per axis, rad.
    pub goal_ang_range: f64,
    /// Mass (and inertia) scale factor range relative to the nominal body.
    pub mass_range: [f64; 2],
    /// Steps before truncation.
    pub episode_len: usize,
    pub success_pos_tol: f64,
    pub success_ori_tol: f64,
    pub success_vel_tol: f64,
    pub success_angvel_tol: f64,
    /// Consecutive in-tolerance steps that end an episode as a success.
    pub hold_steps: usize,
    pub oob_radius: f64,
    pub dt: f64,
    pub scenario: Scenario,
    /// Express observations in the body frame instead of the world frame.
    pub body_frame_obs: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            goal_pos_range: 0.5,
            goal_ang_range: 30f64.to_radians(),
            mass_range: [0.75, 1.25],
            episode_len: 1875,
            success_pos_tol: 0.05,
            success_ori_tol: 5f64.to_radians(),
            success_vel_tol: 0.05,
            success_angvel_tol: 0.05,
            hold_steps: 25,
            oob_radius: 2.0,
            dt: 0.016,
            scenario: Scenario::Iss6dof,
            body_frame_obs: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        let tols = [
            self.success_pos_tol,
            self.success_ori_tol,
            self.success_vel_tol,
            self.success_angvel_tol,
            self.oob_radius,
        ];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return bad("tolerances and oob_radius must be positive");
        }
        if self.episode_len == 0 || self.hold_steps == 0 {
            return bad("episode_len and hold_steps must be positive");
        }
        let [lo, hi] = self.mass_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("mass_range must satisfy 0 < min <= max");
        }
        if !(self.goal_pos_range >= 0.0) || !(self.goal_ang_range >= 0.0) {
            return bad("goal ranges must be non-negative");
        }
        if !(self.dt > 0.0 && self.dt <= 0.5) {
            return bad("dt must lie in (0, 0.5]");
        }
        Ok(())
    }

    pub fn mask(&self) -> DofMask {
        self.scenario.mask()
    }

    /// Success condition on a single observation.
    pub fn within_tolerance(&self, obs: &Observation) -> bool {
        self.within(obs, self.success_pos_tol, self.success_ori_tol)
    }

    /// Success condition with overridden pose tolerances (twist tolerances unchanged).
    pub fn within(&self, obs: &Observation, pos_tol: f64, ori_tol: f64) -> bool {
        obs.pos_err.norm() <= pos_tol
            && obs.ori_err.norm() <= ori_tol
            && obs.lin_vel.norm() <= self.success_vel_tol
            && obs.ang_vel.norm() <= self.success_angvel_tol
    }

    pub fn out_of_bounds(&self, obs: &Observation) -> bool {
        obs.pos_err.norm() > self.oob_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    /// 1/m
    pub w_pos: f64,
    /// 1/rad
    pub w_ori: f64,
    /// s/m
    pub w_linvel: f64,
    /// s/rad
    pub w_angvel: f64,
    pub bonus_success: f64,
    pub penalty_oob: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_pos: 10.0,
            w_ori: 5.0,
            w_linvel: 0.02,
            w_angvel: 0.02,
            bonus_success: 10.0,
            penalty_oob: 10.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), EnvError> {
        let w = [self.w_pos, self.w_ori, self.w_linvel, self.w_angvel];
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(EnvError::Config("reward weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeGoal {
    pub position: Vec3,
    pub attitude: Quat,
}

impl EpisodeGoal {
    pub fn from_state(state: &RigidState) -> Self {
        Self { position: state.position, attitude: state.attitude }
    }
}

/// Pose error and twist: `[pos_err, ori_err, lin_vel, ang_vel]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub pos_err: Vec3,
    pub ori_err: Vec3,
    pub lin_vel: Vec3,
    pub ang_vel: Vec3,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        for (k, v) in [self.pos_err, self.ori_err, self.lin_vel, self.ang_vel].iter().enumerate() {
            out[3 * k..3 * k + 3].copy_from_slice(&v.to_array());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// World-frame observation. Angular velocity is reported in the world frame
/// as well, so all four blocks share axes.
pub fn observe(state: &RigidState, goal: &EpisodeGoal) -> Observation {
    Observation {
        pos_err: goal.position - state.position,
        ori_err: quat_error(goal.attitude, state.attitude),
        lin_vel: state.lin_vel,
        ang_vel: state.attitude.rotate(state.ang_vel),
    }
}

/// Body-frame variant of [`observe`].
pub fn observe_body(state: &RigidState, goal: &EpisodeGoal) -> Observation {
    let world = observe(state, goal);
    let q = state.attitude;
    Observation {
        pos_err: q.inverse_rotate(world.pos_err),
        ori_err: q.inverse_rotate(world.ori_err),
        lin_vel: q.inverse_rotate(world.lin_vel),
        ang_vel: state.ang_vel,
    }
}

fn observe_with(config: &EnvConfig, state: &RigidState, goal: &EpisodeGoal) -> Observation {
    if config.body_frame_obs {
        observe_body(state, goal)
    } else {
        observe(state, goal)
    }
}

/// Shaped reward for the transition `prev_obs → obs`.
pub fn reward(prev_obs: &Observation, obs: &Observation, weights: &RewardWeights, config: &EnvConfig) -> f64 {
    let mut r = weights.w_pos * (prev_obs.pos_err.norm() - obs.pos_err.norm())
        + weights.w_ori * (prev_obs.ori_err.norm() - obs.ori_err.norm())
        - weights.w_linvel * obs.lin_vel.norm()
        - weights.w_angvel * obs.ang_vel.norm();
    if config.within_tolerance(obs) {
        r += weights.bonus_success;
    }
    if config.out_of_bounds(obs) {
        r -= weights.penalty_oob;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Success,
    OutOfBounds,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub termination: Option<Termination>,
    /// Success condition holds on this step.
    pub in_tolerance: bool,
    pub commanded: Wrench,
    pub applied: Wrench,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Live state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub state: RigidState,
    pub goal: EpisodeGoal,
    pub params: BodyParams,
    pub obs: Observation,
    pub tick: usize,
    pub hold: usize,
    pub prev_wrench: Wrench,
}

/// Task definition: configuration, reward weights, actuator limits and the
/// nominal body that mass randomization scales.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Env {
    pub config: EnvConfig,
    pub weights: RewardWeights,
    pub limits: ActuationLimits,
    pub body: BodyParams,
}

fn symmetric(rng: &mut impl Rng, range: f64) -> f64 {
    if range > 0.0 {
        rng.gen_range(-range..=range)
    } else {
        0.0
    }
}

impl Env {
    pub fn new(config: EnvConfig, weights: RewardWeights, limits: ActuationLimits, body: BodyParams) -> Self {
        Self { config, weights, limits, body }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.config.validate()?;
        self.weights.validate()?;
        self.limits.validate().map_err(EnvError::Config)?;
        self.body.validate()?;
        Ok(())
    }

    /// Samples a fresh episode. Locked degrees of freedom get zero goal offsets.
    pub fn reset(&self, rng: &mut impl Rng) -> Episode {
        let c = &self.config;
        let mask = c.mask();
        let pos = Vec3::new(
            symmetric(rng, c.goal_pos_range),
            symmetric(rng, c.goal_pos_range),
            symmetric(rng, c.goal_pos_range),
        );
        let rot = Vec3::new(
            symmetric(rng, c.goal_ang_range),
            symmetric(rng, c.goal_ang_range),
            symmetric(rng, c.goal_ang_range),
        );
        let [lo, hi] = c.mass_range;
        let scale = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let goal = EpisodeGoal {
            position: mask.apply_translation(pos),
            attitude: Quat::from_rotation_vector(mask.apply_rotation(rot)),
        };
        self.start(RigidState::default(), goal, self.body.with_mass_scale(scale))
    }

    pub fn reset_seeded(&self, seed: u64) -> Episode {
        self.reset(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Starts an episode from an explicit state, goal and body.
    pub fn start(&self, state: RigidState, goal: EpisodeGoal, params: BodyParams) -> Episode {
        let obs = observe_with(&self.config, &state, &goal);
        Episode { state, goal, params, obs, tick: 0, hold: 0, prev_wrench: Wrench::ZERO }
    }

    pub fn observe(&self, state: &RigidState, goal: &EpisodeGoal) -> Observation {
        observe_with(&self.config, state, goal)
    }

    /// denormalize → clamp → propagate → observe → reward → termination.
    pub fn step(&self, ep: &mut Episode, action: &[f64; ACT_DIM]) -> Result<Transition, EnvError> {
        self.step_wrench(ep, &denormalize_action(action, &self.limits))
    }

    /// [`step`](Self::step) for a controller that already speaks in newtons.
    pub fn step_wrench(&self, ep: &mut Episode, commanded: &Wrench) -> Result<Transition, EnvError> {
        let c = &self.config;
        let commanded = *commanded;
        let applied = apply_limits(&ep.prev_wrench, &commanded, &self.limits, c.dt);
        ep.state = dynamics::step(&ep.state, &applied, &ep.params, &c.mask(), c.dt)?;
        ep.prev_wrench = applied;
        ep.tick += 1;

        let obs = observe_with(c, &ep.state, &ep.goal);
        let r = reward(&ep.obs, &obs, &self.weights, c);
        ep.obs = obs;

        let in_tolerance = c.within_tolerance(&obs);
        ep.hold = if in_tolerance { ep.hold + 1 } else { 0 };
        let termination = if ep.hold >= c.hold_steps {
            Some(Termination::Success)
        } else if c.out_of_bounds(&obs) {
            Some(Termination::OutOfBounds)
        } else if ep.tick >= c.episode_len {
            Some(Termination::Timeout)
        } else {
            None
        };
        Ok(Transition {
            obs,
            reward: r,
            done: termination.is_some(),
            info: StepInfo { termination, in_tolerance, commanded, applied },
        })
    }
}
