//! Deterministic episode evaluation over a fixed bank of seeds.

use rayon::prelude::*;

use crate::actuation::Wrench;
use crate::control::Controller;
use crate::dynamics::RigidState;
use crate::env::{Env, EnvError, EpisodeGoal, Observation, Termination};

/// Seed of episode `index` in evaluation bank `bank` (SplitMix64 mixing).
pub fn eval_seed(bank: u64, index: usize) -> u64 {
    let mut z = bank
        .wrapping_mul(0xD1B5_4A32_D192_ED03)
        .wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: RigidState,
    pub obs: Observation,
    pub commanded: Wrench,
    pub applied: Wrench,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub goal: EpisodeGoal,
    pub mass: f64,
    pub termination: Termination,
    pub steps: usize,
    pub episode_return: f64,
    pub final_pos_err: f64,
    pub final_ori_err: f64,
    /// Start of the in-tolerance streak that ended the episode, s.
    pub settle_time: Option<f64>,
    pub trace: Vec<TraceRow>,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.termination == Termination::Success
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_final_pos_err: f64,
    pub mean_final_ori_err: f64,
    /// Over successful episodes; NaN when there are none.
    pub mean_settle_time: f64,
}

impl EvalSummary {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let n = records.len();
        let nf = n.max(1) as f64;
        let successes = records.iter().filter(|r| r.success()).count();
        let settle: Vec<f64> = records.iter().filter_map(|r| r.settle_time).collect();
        Self {
            episodes: n,
            successes,
            success_rate: successes as f64 / nf,
            mean_return: records.iter().map(|r| r.episode_return).sum::<f64>() / nf,
            mean_final_pos_err: records.iter().map(|r| r.final_pos_err).sum::<f64>() / nf,
            mean_final_ori_err: records.iter().map(|r| r.final_ori_err).sum::<f64>() / nf,
            mean_settle_time: if settle.is_empty() {
                f64::NAN
            } else {
                settle.iter().sum::<f64>() / settle.len() as f64
            },
        }
    }
}

impl EvalSummary {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "episodes", "successes", "success_rate", "mean_return", "mean_final_pos_err", "mean_final_ori_err",
            "mean_settle_time",
        ])?;
        w.write_record([
            self.episodes.to_string(),
            self.successes.to_string(),
            self.success_rate.to_string(),
            self.mean_return.to_string(),
            self.mean_final_pos_err.to_string(),
            self.mean_final_ori_err.to_string(),
            self.mean_settle_time.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Runs one episode to termination with `ctrl` in the loop.
pub fn run_episode<C: Controller + ?Sized>(
    ctrl: &C,
    env: &Env,
    seed: u64,
    record: bool,
) -> Result<EpisodeRecord, EnvError> {
    let mut ep = env.reset_seeded(seed);
    let (goal, mass) = (ep.goal, ep.params.mass);
    let dt = env.config.dt;
    let mut trace = Vec::new();
    let mut ret = 0.0;
    if record {
        trace.push(TraceRow {
            t: 0.0,
            state: ep.state,
            obs: ep.obs,
            commanded: Wrench::ZERO,
            applied: Wrench::ZERO,
        });
    }
    loop {
        let cmd = ctrl.command(&ep.state, &ep.goal, &ep.obs);
        let tr = env.step_wrench(&mut ep, &cmd)?;
        ret += tr.reward;
        if record {
            trace.push(TraceRow {
                t: ep.tick as f64 * dt,
                state: ep.state,
                obs: tr.obs,
                commanded: tr.info.commanded,
                applied: tr.info.applied,
            });
        }
        if let Some(termination) = tr.info.termination {
            let success = termination == Termination::Success;
            return Ok(EpisodeRecord {
                seed,
                goal,
                mass,
                termination,
                steps: ep.tick,
                episode_return: ret,
                final_pos_err: tr.obs.pos_err.norm(),
                final_ori_err: tr.obs.ori_err.norm(),
                settle_time: success.then(|| (ep.tick + 1 - env.config.hold_steps) as f64 * dt),
                trace,
            });
        }
    }
}

/// Evaluates `episodes` seeds from `bank`; records come back in seed order.
pub fn evaluate<C: Controller + ?Sized>(
    ctrl: &C,
    env: &Env,
    bank: u64,
    episodes: usize,
    pool: &rayon::ThreadPool,
    record: bool,
) -> Result<(EvalSummary, Vec<EpisodeRecord>), EnvError> {
    let records: Result<Vec<_>, _> = pool.install(|| {
        (0..episodes)
            .into_par_iter()
            .map(|i| run_episode(ctrl, env, eval_seed(bank, i), record))
            .collect()
    });
    let records = records?;
    Ok((EvalSummary::from_records(&records), records))
}
