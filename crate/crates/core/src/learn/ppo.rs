//! Clipped-surrogate PPO update with explicit gradients and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::mlp::MlpCache;
use super::policy::{entropy, gaussian_log_prob, PolicyNet, DEFAULT_OBS_SCALE};
use super::{LearnError, RolloutBuffer};
use crate::env::{ACT_DIM, OBS_DIM};

/// Samples per gradient chunk. Chunks are summed in index order, so the
/// result does not depend on how many workers compute them.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub total_env_steps: u64,
    pub n_envs: usize,
    pub horizon: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub adam_eps: f64,
    /// Linearly decay the learning rate to zero over training.
    pub lr_anneal: bool,
    /// Fixed divisors applied to the observation before the networks.
    pub obs_scale: [f64; OBS_DIM],
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            lr: 1e-3,
            epochs_per_update: 4,
            minibatch_size: 1024,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            total_env_steps: 3_000_000,
            n_envs: 64,
            horizon: 256,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            adam_eps: 1e-8,
            lr_anneal: false,
            obs_scale: DEFAULT_OBS_SCALE,
        }
    }
}

impl PpoConfig {
    pub fn batch_size(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return bad("gamma and lam must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) || !(self.lr > 0.0) {
            return bad("clip_eps and lr must be positive");
        }
        if self.n_envs == 0 || self.horizon == 0 || self.minibatch_size == 0 || self.epochs_per_update == 0 {
            return bad("n_envs, horizon, minibatch_size and epochs_per_update must be positive");
        }
        if !(self.max_grad_norm > 0.0) || self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("max_grad_norm must be positive and loss coefficients non-negative");
        }
        if self.obs_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("obs_scale entries must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be non-empty and positive");
        }
        if self.total_env_steps < self.batch_size() as u64 {
            return Err(LearnError::InsufficientSteps {
                total: self.total_env_steps,
                batch: self.batch_size() as u64,
            });
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, eps: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps, t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A gathered minibatch. Observations are raw; the network applies its own scaling.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Minibatch {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gather(buf: &RolloutBuffer, adv: &[f64], ret: &[f64], idx: &[usize]) -> Self {
        let mut mb = Minibatch::default();
        for &k in idx {
            mb.obs.extend_from_slice(buf.obs_at(k));
            mb.actions.extend_from_slice(buf.action_at(k));
            mb.old_log_probs.push(buf.log_probs[k]);
            mb.advantages.push(adv[k]);
            mb.returns.push(ret[k]);
        }
        mb
    }

    /// Shifts and scales advantages to zero mean and unit (population) std.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for a in &mut self.advantages {
            *a -= mean;
            if std > 1e-12 {
                *a /= std;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Partial {
    policy: f64,
    value: f64,
    kl: f64,
    clipped: f64,
}

fn normalized(net: &PolicyNet, raw: &[f64]) -> [f64; OBS_DIM] {
    let mut x = [0.0; OBS_DIM];
    for k in 0..OBS_DIM {
        x[k] = raw[k] / net.obs_scale[k];
    }
    x
}

fn chunk_loss_grad(net: &PolicyNet, mb: &Minibatch, range: std::ops::Range<usize>, clip_eps: f64, value_coef: f64) -> (Partial, Vec<f64>) {
    let na = net.actor.params().len();
    let mut grad = vec![0.0; net.param_count()];
    let (g_actor, rest) = grad.split_at_mut(na);
    let (g_logstd, g_critic) = rest.split_at_mut(ACT_DIM);
    let n = mb.len() as f64;
    let std = net.std();
    let mut acache = MlpCache::default();
    let mut ccache = MlpCache::default();
    let mut part = Partial::default();
    for j in range {
        let x = normalized(net, &mb.obs[j * OBS_DIM..(j + 1) * OBS_DIM]);
        net.actor.forward_cached(&x, &mut acache);
        net.critic.forward_cached(&x, &mut ccache);
        let mean = acache.output();
        let value = ccache.output()[0];
        let action = &mb.actions[j * ACT_DIM..(j + 1) * ACT_DIM];
        let logp = gaussian_log_prob(mean, &net.log_std, action);
        let log_ratio = logp - mb.old_log_probs[j];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[j];

        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
        part.policy += -unclipped.min(clipped);
        part.kl += (ratio - 1.0) - log_ratio;
        if (ratio - 1.0).abs() > clip_eps {
            part.clipped += 1.0;
        }
        // ∂(-min)/∂ratio is -A while the unclipped branch is active, else 0
        let d_ratio = if unclipped <= clipped { -adv } else { 0.0 };
        let d_logp = d_ratio * ratio / n;

        let mut d_mean = [0.0; ACT_DIM];
        for k in 0..ACT_DIM {
            let z = (action[k] - mean[k]) / std[k];
            d_mean[k] = d_logp * z / std[k];
            g_logstd[k] += d_logp * (z * z - 1.0);
        }
        if d_logp != 0.0 {
            net.actor.backward(&acache, &d_mean, g_actor);
        }

        let diff = value - mb.returns[j];
        part.value += value_coef * diff * diff;
        net.critic.backward(&ccache, &[2.0 * value_coef * diff / n], g_critic);
    }
    (part, grad)
}

/// Loss `L = mean(-min(ρA, clip(ρ)A) + c_v (v - R)²) - c_e H` and its gradient
/// with respect to [`PolicyNet::flat_params`].
pub fn minibatch_loss_grad(
    net: &PolicyNet,
    mb: &Minibatch,
    clip_eps: f64,
    value_coef: f64,
    entropy_coef: f64,
    pool: &rayon::ThreadPool,
) -> (LossTerms, Vec<f64>) {
    let n = mb.len();
    let chunks: Vec<_> = (0..n).step_by(GRAD_CHUNK).map(|s| s..(s + GRAD_CHUNK).min(n)).collect();
    let parts: Vec<(Partial, Vec<f64>)> = pool.install(|| {
        chunks
            .into_par_iter()
            .map(|r| chunk_loss_grad(net, mb, r, clip_eps, value_coef))
            .collect()
    });
    let mut grad = vec![0.0; net.param_count()];
    let mut sum = Partial::default();
    for (p, g) in parts {
        sum.policy += p.policy;
        sum.value += p.value;
        sum.kl += p.kl;
        sum.clipped += p.clipped;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let na = net.actor.params().len();
    for k in 0..ACT_DIM {
        grad[na + k] -= entropy_coef;
    }
    let nf = n.max(1) as f64;
    let h = entropy(&net.log_std);
    let terms = LossTerms {
        policy: sum.policy / nf,
        value: sum.value / nf,
        entropy: h,
        approx_kl: sum.kl / nf,
        clip_frac: sum.clipped / nf,
        total: (sum.policy + sum.value) / nf - entropy_coef * h,
    };
    (terms, grad)
}

/// Rescales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// Per-environment GAE over the whole buffer, returned in buffer order.
pub fn buffer_advantages(buf: &RolloutBuffer, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(buf.len());
    let mut ret = Vec::with_capacity(buf.len());
    for e in 0..buf.n_envs {
        let (a, r) = gae(
            buf.env_slice(&buf.rewards, e),
            buf.env_slice(&buf.values, e),
            buf.env_slice(&buf.dones, e),
            buf.bootstrap[e],
            gamma,
            lam,
        );
        adv.extend(a);
        ret.extend(r);
    }
    (adv, ret)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Runs `epochs_per_update` passes of shuffled minibatch updates over `buf`.
pub fn ppo_update(
    net: &mut PolicyNet,
    adam: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
    pool: &rayon::ThreadPool,
) -> Result<UpdateStats, LearnError> {
    buf.check_shapes().map_err(LearnError::Shape)?;
    let (adv, ret) = buffer_advantages(buf, cfg.gamma, cfg.lam);
    if adv.iter().any(|a| !a.is_finite()) {
        return Err(LearnError::NonFinite { minibatch: 0 });
    }
    let n = buf.len();
    let mb_size = cfg.minibatch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut params = net.flat_params();
    let mut mb_index = 0;
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for idx in order.chunks(mb_size) {
            if idx.len() < mb_size {
                continue;
            }
            let mut mb = Minibatch::gather(buf, &adv, &ret, idx);
            mb.normalize_advantages();
            let (terms, mut grad) =
                minibatch_loss_grad(net, &mb, cfg.clip_eps, cfg.value_coef, cfg.entropy_coef, pool);
            if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(LearnError::NonFinite { minibatch: mb_index });
            }
            let norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut params, &grad);
            net.set_flat_params(&params);
            net.clamp_log_std();
            params = net.flat_params();

            stats.policy_loss += terms.policy;
            stats.value_loss += terms.value;
            stats.entropy += terms.entropy;
            stats.approx_kl += terms.approx_kl;
            stats.clip_frac += terms.clip_frac;
            stats.grad_norm += norm;
            mb_index += 1;
        }
    }
    let k = mb_index.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_frac /= k;
    stats.grad_norm /= k;
    stats.minibatches = mb_index;
    Ok(stats)
}
