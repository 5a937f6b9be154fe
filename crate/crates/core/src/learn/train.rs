//! Training loop: alternate rollout collection and PPO updates, evaluate the
//! deterministic policy on a fixed seed bank, keep the best checkpoint.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::{save_checkpoint, Checkpoint, Hyperparameters, RecordedEval};
use super::policy::PolicyNet;
use super::ppo::{ppo_update, Adam, PpoConfig};
use super::LearnError;
use crate::control::RlController;
use crate::env::{Env, EpisodeSummary, Termination, VecEnv};
use crate::eval::{evaluate, EvalSummary};

const ENV_STREAM_SALT: u64 = 0x5EED_E17F_0000_0001;

/// When and how the deterministic policy is scored during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSchedule {
    /// Updates between evaluations (the final update is always evaluated).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Seed bank used to pick the best checkpoint.
    pub selection_bank: u64,
    /// Seed bank for the held-out score recorded in the checkpoint.
    pub heldout_bank: u64,
    pub heldout_episodes: usize,
    /// Print a progress line per evaluation.
    pub verbose: bool,
}

impl Default for EvalSchedule {
    fn default() -> Self {
        Self {
            eval_interval: 10,
            eval_episodes: 50,
            selection_bank: 1001,
            heldout_bank: 2002,
            heldout_episodes: 100,
            verbose: true,
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub env_steps: u64,
    /// Deterministic-policy return on the selection bank.
    pub mean_return: f64,
    pub success_rate: f64,
    /// Stochastic-policy episodes finished since the previous row.
    pub train_return: f64,
    pub train_success: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

pub struct TrainSetup {
    pub env: Env,
    pub ppo: PpoConfig,
    pub schedule: EvalSchedule,
    pub seed: u64,
    pub workers: usize,
    /// Resolved run configuration embedded into checkpoints.
    pub config_text: String,
    /// Where `policy.apry`, `trainer.apry` and `curve.csv` go, if anywhere.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub best_selection: EvalSummary,
    pub heldout: EvalSummary,
    pub final_policy: PolicyNet,
    pub curve: Vec<CurveRow>,
    pub updates: usize,
    pub env_steps: u64,
}

/// Stable hash of everything about the task a policy was trained against.
pub fn env_hash(env: &Env) -> u64 {
    #[derive(Serialize)]
    struct Hashed<'a> {
        env: &'a crate::env::EnvConfig,
        reward: &'a crate::env::RewardWeights,
        actuation: &'a crate::actuation::ActuationLimits,
        body: &'a crate::dynamics::BodyParams,
    }
    let text = toml::to_string(&Hashed { env: &env.config, reward: &env.weights, actuation: &env.limits, body: &env.body })
        .expect("env config serializes");
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<(), LearnError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LearnError::Io(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| LearnError::Io(e.into()))?;
    }
    if rows.is_empty() {
        w.write_record([
            "env_steps", "mean_return", "success_rate", "train_return", "train_success",
            "policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac",
        ])
        .map_err(|e| LearnError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn better(a: &EvalSummary, b: &EvalSummary) -> bool {
    a.success_rate > b.success_rate || (a.success_rate == b.success_rate && a.mean_return > b.mean_return)
}

fn make_checkpoint(setup: &TrainSetup, policy: &PolicyNet, env_steps: u64, eval: RecordedEval, adam: Option<&Adam>) -> Checkpoint {
    let p = &setup.ppo;
    Checkpoint {
        policy: policy.clone(),
        env_hash: env_hash(&setup.env),
        env_steps,
        eval,
        hyper: Hyperparameters {
            f_max: setup.env.limits.f_max,
            tau_max: setup.env.limits.tau_max,
            dt: setup.env.config.dt,
            gamma: p.gamma,
            lam: p.lam,
            clip_eps: p.clip_eps,
            lr: p.lr,
        },
        config_text: setup.config_text.clone(),
        optimizer: adam.cloned(),
    }
}

pub fn evaluate_policy(policy: &PolicyNet, env: &Env, bank: u64, episodes: usize, pool: &rayon::ThreadPool) -> Result<EvalSummary, LearnError> {
    let ctrl = RlController { policy, limits: env.limits };
    Ok(evaluate(&ctrl, env, bank, episodes, pool, false)?.0)
}

pub fn train(setup: &TrainSetup) -> Result<TrainOutcome, LearnError> {
    setup.env.validate()?;
    setup.ppo.validate()?;
    let cfg = &setup.ppo;
    let sched = &setup.schedule;
    let pool = crate::worker_pool(setup.workers);
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut net = PolicyNet::new(&cfg.hidden, cfg.init_log_std, &mut rng);
    net.obs_scale = cfg.obs_scale;
    let mut adam = Adam::new(net.param_count(), cfg.lr, cfg.adam_eps);
    let mut venv = VecEnv::new(setup.env, cfg.n_envs, setup.seed ^ ENV_STREAM_SALT);
    let updates = (cfg.total_env_steps / cfg.batch_size() as u64) as usize;
    let out = setup.out_dir.as_deref();

    let mut curve = Vec::new();
    let mut best: Option<(PolicyNet, EvalSummary, u64)> = None;
    let mut finished: Vec<EpisodeSummary> = Vec::new();
    let mut env_steps = 0u64;

    for u in 0..updates {
        if cfg.lr_anneal {
            adam.lr = cfg.lr * (1.0 - u as f64 / updates as f64);
        }
        let (buf, done) = venv.collect(&net, cfg.horizon, &pool)?;
        env_steps += buf.len() as u64;
        finished.extend(done);

        let before = net.clone();
        let stats = match ppo_update(&mut net, &mut adam, &buf, cfg, &mut rng, &pool) {
            Ok(stats) => stats,
            Err(e) => {
                if let Some(dir) = out {
                    let ck = make_checkpoint(setup, &before, env_steps, RecordedEval { bank: 0, episodes: 0, success_rate: f64::NAN }, None);
                    save_checkpoint(&dir.join("last_good.apry"), &ck)?;
                }
                return Err(e);
            }
        };

        let last = u + 1 == updates;
        if (u + 1) % sched.eval_interval.max(1) == 0 || last {
            let eval = evaluate_policy(&net, &setup.env, sched.selection_bank, sched.eval_episodes, &pool)?;
            let nf = finished.len().max(1) as f64;
            let row = CurveRow {
                env_steps,
                mean_return: eval.mean_return,
                success_rate: eval.success_rate,
                train_return: finished.iter().map(|e| e.episode_return).sum::<f64>() / nf,
                train_success: finished.iter().filter(|e| e.termination == Termination::Success).count() as f64 / nf,
                policy_loss: stats.policy_loss,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
                approx_kl: stats.approx_kl,
                clip_frac: stats.clip_frac,
            };
            finished.clear();
            if sched.verbose {
                eprintln!(
                    "steps {:>9}  eval success {:.3}  return {:>8.2}  train success {:.3}  entropy {:>6.2}  kl {:.4}",
                    row.env_steps, row.success_rate, row.mean_return, row.train_success, row.entropy, row.approx_kl
                );
            }
            curve.push(row);
            if best.as_ref().map_or(true, |(_, b, _)| better(&eval, b)) {
                best = Some((net.clone(), eval, env_steps));
                if let Some(dir) = out {
                    let ck = make_checkpoint(setup, &net, env_steps, RecordedEval { bank: 0, episodes: 0, success_rate: eval.success_rate }, None);
                    save_checkpoint(&dir.join("policy.apry"), &ck)?;
                }
            }
            if let Some(dir) = out {
                write_curve(&dir.join("curve.csv"), &curve)?;
            }
        }
    }

    let (best_net, best_selection, best_steps) = best.expect("at least one update runs");
    let heldout = evaluate_policy(&best_net, &setup.env, sched.heldout_bank, sched.heldout_episodes, &pool)?;
    let recorded = RecordedEval {
        bank: sched.heldout_bank,
        episodes: sched.heldout_episodes as u64,
        success_rate: heldout.success_rate,
    };
    let best_ck = make_checkpoint(setup, &best_net, best_steps, recorded, None);
    if let Some(dir) = out {
        save_checkpoint(&dir.join("policy.apry"), &best_ck)?;
        let trainer = make_checkpoint(setup, &net, env_steps, recorded, Some(&adam));
        save_checkpoint(&dir.join("trainer.apry"), &trainer)?;
        write_curve(&dir.join("curve.csv"), &curve)?;
    }
    Ok(TrainOutcome {
        best: best_ck,
        best_selection,
        heldout,
        final_policy: net,
        curve,
        updates,
        env_steps,
    })
}
