//! Gaussian actor-critic over the 12-dimensional observation.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::mlp::Mlp;
use super::LearnError;
use crate::env::{ActionSource, Observation, ACT_DIM, OBS_DIM};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// Fixed observation scales: position 1 m, rotation π rad, velocities 0.5.
pub const DEFAULT_OBS_SCALE: [f64; OBS_DIM] =
    [1.0, 1.0, 1.0, PI, PI, PI, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];

/// Actor mean network, state-independent log-std, critic network and the
/// observation scales they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub actor: Mlp,
    pub log_std: [f64; ACT_DIM],
    pub critic: Mlp,
    pub obs_scale: [f64; OBS_DIM],
}

impl PolicyNet {
    pub fn new(hidden: &[usize], init_log_std: f64, rng: &mut impl Rng) -> Self {
        let mut actor_sizes = vec![OBS_DIM];
        actor_sizes.extend_from_slice(hidden);
        actor_sizes.push(ACT_DIM);
        let mut critic_sizes = actor_sizes.clone();
        *critic_sizes.last_mut().unwrap() = 1;
        Self {
            actor: Mlp::random(&actor_sizes, 0.01, rng),
            log_std: [init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); ACT_DIM],
            critic: Mlp::random(&critic_sizes, 1.0, rng),
            obs_scale: DEFAULT_OBS_SCALE,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.actor.input_dim() != OBS_DIM || self.actor.output_dim() != ACT_DIM {
            return Err(LearnError::Shape(format!("actor sizes {:?}", self.actor.sizes())));
        }
        if self.critic.input_dim() != OBS_DIM || self.critic.output_dim() != 1 {
            return Err(LearnError::Shape(format!("critic sizes {:?}", self.critic.sizes())));
        }
        Ok(())
    }

    pub fn normalize(&self, obs: &Observation) -> [f64; OBS_DIM] {
        let mut x = obs.to_array();
        for (v, s) in x.iter_mut().zip(&self.obs_scale) {
            *v /= s;
        }
        x
    }

    /// Deterministic action: the Gaussian mean.
    pub fn mean_action(&self, obs: &Observation) -> [f64; ACT_DIM] {
        let out = self.actor.forward(&self.normalize(obs)).expect("validated actor");
        let mut a = [0.0; ACT_DIM];
        a.copy_from_slice(&out);
        a
    }

    pub fn critic_value(&self, obs: &Observation) -> f64 {
        self.critic.forward(&self.normalize(obs)).expect("validated critic")[0]
    }

    pub fn std(&self) -> [f64; ACT_DIM] {
        self.log_std.map(f64::exp)
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.log_std)
    }

    pub fn param_count(&self) -> usize {
        self.actor.params().len() + ACT_DIM + self.critic.params().len()
    }

    /// Parameters in declaration order: actor, log-std, critic.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.actor.params());
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(self.critic.params());
        v
    }

    /// Inverse of [`flat_params`](Self::flat_params); does not clamp log-std.
    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let na = self.actor.params().len();
        self.actor.params_mut().copy_from_slice(&flat[..na]);
        self.log_std.copy_from_slice(&flat[na..na + ACT_DIM]);
        self.critic.params_mut().copy_from_slice(&flat[na + ACT_DIM..]);
    }

    pub fn clamp_log_std(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|v| v.is_finite())
    }
}

/// Diagonal Gaussian log-density of `action`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * E).ln()).sum()
}

/// Draws `mean + σ ⊙ ε` and returns the action with its log-density.
pub fn policy_sample(net: &PolicyNet, obs: &Observation, rng: &mut impl Rng) -> ([f64; ACT_DIM], f64) {
    let mean = net.mean_action(obs);
    let mut action = [0.0; ACT_DIM];
    for k in 0..ACT_DIM {
        let eps: f64 = rng.sample(StandardNormal);
        action[k] = mean[k] + net.log_std[k].exp() * eps;
    }
    (action, gaussian_log_prob(&mean, &net.log_std, &action))
}

impl ActionSource for PolicyNet {
    fn sample(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> ([f64; ACT_DIM], f64, f64) {
        let (a, lp) = policy_sample(self, obs, rng);
        (a, lp, self.critic_value(obs))
    }

    fn value(&self, obs: &Observation) -> f64 {
        self.critic_value(obs)
    }
}
