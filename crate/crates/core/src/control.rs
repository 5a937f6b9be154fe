//! Common interface for anything that closes the loop on the free-flyer.

use crate::actuation::{denormalize_action, ActuationLimits, Wrench};
use crate::dynamics::RigidState;
use crate::env::{EpisodeGoal, Observation};
use crate::learn::PolicyNet;

/// Produces an unclamped body-frame wrench command for one control tick.
pub trait Controller: Sync {
    fn command(&self, state: &RigidState, goal: &EpisodeGoal, obs: &Observation) -> Wrench;
}

/// Deterministic (mean-action) execution of a trained policy.
#[derive(Debug, Clone, Copy)]
pub struct RlController<'a> {
    pub policy: &'a PolicyNet,
    pub limits: ActuationLimits,
}

impl Controller for RlController<'_> {
    fn command(&self, _state: &RigidState, _goal: &EpisodeGoal, obs: &Observation) -> Wrench {
        // denormalize clamps to [-1, 1], i.e. the command never exceeds the limits
        denormalize_action(&self.policy.mean_action(obs), &self.limits)
    }
}
