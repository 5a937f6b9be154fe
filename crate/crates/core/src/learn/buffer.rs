use crate::env::{ACT_DIM, OBS_DIM};

/// On-policy batch laid out `[env][time]`, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last step, per env.
    pub bootstrap: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize) -> Self {
        let n = n_envs * horizon;
        Self {
            n_envs,
            horizon,
            obs: vec![0.0; n * OBS_DIM],
            actions: vec![0.0; n * ACT_DIM],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            bootstrap: vec![0.0; n_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn idx(&self, env: usize, t: usize) -> usize {
        env * self.horizon + t
    }

    pub fn obs_at(&self, k: usize) -> &[f64] {
        &self.obs[k * OBS_DIM..(k + 1) * OBS_DIM]
    }

    pub fn action_at(&self, k: usize) -> &[f64] {
        &self.actions[k * ACT_DIM..(k + 1) * ACT_DIM]
    }

    pub fn reward(&self, env: usize, t: usize) -> f64 {
        self.rewards[self.idx(env, t)]
    }

    pub fn env_slice<'a, T>(&self, data: &'a [T], env: usize) -> &'a [T] {
        &data[env * self.horizon..(env + 1) * self.horizon]
    }

    /// Checks every per-step array against `n_envs × horizon`.
    pub fn check_shapes(&self) -> Result<(), String> {
        let n = self.len();
        let ok = self.obs.len() == n * OBS_DIM
            && self.actions.len() == n * ACT_DIM
            && self.log_probs.len() == n
            && self.rewards.len() == n
            && self.values.len() == n
            && self.dones.len() == n
            && self.bootstrap.len() == self.n_envs;
        if ok {
            Ok(())
        } else {
            Err(format!("rollout buffer arrays do not match {} envs x {} steps", self.n_envs, self.horizon))
        }
    }
}
