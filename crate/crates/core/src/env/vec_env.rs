//! Batches of independent environments.
//!
//! Every slot owns its episode and its own random stream (the master seed
//! with the slot index as ChaCha stream id), so a slot's trajectory does not
//! depend on which worker advances it. Results are merged in slot order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Env, EnvError, Episode, Observation, Termination, ACT_DIM, OBS_DIM};
use crate::learn::RolloutBuffer;

/// Anything that can act in the environment during rollout collection.
pub trait ActionSource: Sync {
    /// Returns the sampled action, its log-density and the value estimate.
    fn sample(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> ([f64; ACT_DIM], f64, f64);

    fn value(&self, obs: &Observation) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub env_index: usize,
    pub episode_return: f64,
    pub length: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
struct Slot {
    episode: Episode,
    rng: ChaCha8Rng,
    episode_return: f64,
}

#[derive(Debug, Default)]
struct SlotTrace {
    obs: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    finished: Vec<EpisodeSummary>,
}

pub struct VecEnv {
    env: Env,
    slots: Vec<Slot>,
}

/// Random stream for slot `index` under `seed`.
pub fn slot_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl VecEnv {
    pub fn new(env: Env, n_envs: usize, seed: u64) -> Self {
        assert!(n_envs >= 1, "need at least one environment");
        let slots = (0..n_envs)
            .map(|i| {
                let mut rng = slot_rng(seed, i);
                let episode = env.reset(&mut rng);
                Slot { episode, rng, episode_return: 0.0 }
            })
            .collect();
        Self { env, slots }
    }

    pub fn n_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Advances every slot `horizon` steps, resetting finished episodes.
    pub fn collect<P: ActionSource>(
        &mut self,
        policy: &P,
        horizon: usize,
        pool: &rayon::ThreadPool,
    ) -> Result<(RolloutBuffer, Vec<EpisodeSummary>), EnvError> {
        let env = &self.env;
        let traces: Vec<Result<SlotTrace, EnvError>> = pool.install(|| {
            self.slots
                .par_iter_mut()
                .enumerate()
                .map(|(i, slot)| run_slot(env, slot, i, policy, horizon))
                .collect()
        });

        let n = self.slots.len();
        let mut buf = RolloutBuffer::new(n, horizon);
        let mut finished = Vec::new();
        for (i, trace) in traces.into_iter().enumerate() {
            let t = trace?;
            let (a, b) = (i * horizon, (i + 1) * horizon);
            buf.obs[a * OBS_DIM..b * OBS_DIM].copy_from_slice(&t.obs);
            buf.actions[a * ACT_DIM..b * ACT_DIM].copy_from_slice(&t.actions);
            buf.log_probs[a..b].copy_from_slice(&t.log_probs);
            buf.rewards[a..b].copy_from_slice(&t.rewards);
            buf.values[a..b].copy_from_slice(&t.values);
            buf.dones[a..b].copy_from_slice(&t.dones);
            buf.bootstrap[i] = t.bootstrap;
            finished.extend(t.finished);
        }
        Ok((buf, finished))
    }
}

fn run_slot<P: ActionSource>(
    env: &Env,
    slot: &mut Slot,
    index: usize,
    policy: &P,
    horizon: usize,
) -> Result<SlotTrace, EnvError> {
    let mut t = SlotTrace {
        obs: Vec::with_capacity(horizon * OBS_DIM),
        actions: Vec::with_capacity(horizon * ACT_DIM),
        ..Default::default()
    };
    for _ in 0..horizon {
        let obs = slot.episode.obs;
        let (action, log_prob, value) = policy.sample(&obs, &mut slot.rng);
        let tr = env
            .step(&mut slot.episode, &action)
            .map_err(|e| match e {
                EnvError::Dynamics(source) => EnvError::InEnv { index, source },
                other => other,
            })?;
        t.obs.extend_from_slice(&obs.to_array());
        t.actions.extend_from_slice(&action);
        t.log_probs.push(log_prob);
        t.values.push(value);
        t.rewards.push(tr.reward);
        t.dones.push(tr.done);
        slot.episode_return += tr.reward;
        if let Some(termination) = tr.info.termination {
            t.finished.push(EpisodeSummary {
                env_index: index,
                episode_return: slot.episode_return,
                length: slot.episode.tick,
                termination,
            });
            slot.episode = env.reset(&mut slot.rng);
            slot.episode_return = 0.0;
        }
    }
    t.bootstrap = policy.value(&slot.episode.obs);
    Ok(t)
}

/// Collects one batch from freshly reset environments.
pub fn batch_rollout<P: ActionSource>(
    policy: &P,
    n_envs: usize,
    horizon: usize,
    env: &Env,
    seed: u64,
    workers: usize,
) -> Result<RolloutBuffer, EnvError> {
    let pool = crate::worker_pool(workers);
    let mut venv = VecEnv::new(*env, n_envs, seed);
    Ok(venv.collect(policy, horizon, &pool)?.0)
}
