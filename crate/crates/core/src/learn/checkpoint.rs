//! Portable policy checkpoints.
//!
//! Little-endian binary:
//!
//! ```text
//! "APRY"  magic
//! u32     format version
//! u32 n, n × u32        actor layer sizes
//! u32 n, n × u32        critic layer sizes
//! 12 × f64              observation scales
//! u64     env config hash
//! u64     env steps trained
//! u64 bank, u64 episodes, f64 success rate    recorded held-out evaluation
//! u32 n, n × f64        scalars: f_max, tau_max, dt, gamma, lam, clip_eps, lr
//! u32 n, n × u8         resolved run config (UTF-8 TOML)
//! f64 arrays            actor params, log-std, critic params
//! u8      optimizer flag; when 1: u64 step, m, v (one f64 per parameter each)
//! ```
//!
//! Trailing bytes are rejected.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use super::mlp::{param_count, Mlp};
use super::policy::PolicyNet;
use super::ppo::Adam;
use super::LearnError;
use crate::env::{ACT_DIM, OBS_DIM};

pub const MAGIC: &[u8; 4] = b"APRY";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordedEval {
    pub bank: u64,
    pub episodes: u64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub f_max: f64,
    pub tau_max: f64,
    pub dt: f64,
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub lr: f64,
}

impl Hyperparameters {
    fn to_vec(self) -> Vec<f64> {
        vec![self.f_max, self.tau_max, self.dt, self.gamma, self.lam, self.clip_eps, self.lr]
    }

    fn from_slice(v: &[f64]) -> Result<Self, LearnError> {
        if v.len() != 7 {
            return Err(LearnError::Checkpoint(format!("expected 7 scalars, found {}", v.len())));
        }
        Ok(Self { f_max: v[0], tau_max: v[1], dt: v[2], gamma: v[3], lam: v[4], clip_eps: v[5], lr: v[6] })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: PolicyNet,
    pub env_hash: u64,
    pub env_steps: u64,
    pub eval: RecordedEval,
    pub hyper: Hyperparameters,
    pub config_text: String,
    /// Present in training checkpoints only.
    pub optimizer: Option<Adam>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_sizes(out: &mut Vec<u8>, sizes: &[usize]) {
    put_u32(out, sizes.len() as u32);
    for &s in sizes {
        put_u32(out, s as u32);
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_sizes(&mut out, self.policy.actor.sizes());
        put_sizes(&mut out, self.policy.critic.sizes());
        put_f64s(&mut out, &self.policy.obs_scale);
        put_u64(&mut out, self.env_hash);
        put_u64(&mut out, self.env_steps);
        put_u64(&mut out, self.eval.bank);
        put_u64(&mut out, self.eval.episodes);
        put_f64s(&mut out, &[self.eval.success_rate]);
        let scalars = self.hyper.to_vec();
        put_u32(&mut out, scalars.len() as u32);
        put_f64s(&mut out, &scalars);
        put_u32(&mut out, self.config_text.len() as u32);
        out.extend_from_slice(self.config_text.as_bytes());
        put_f64s(&mut out, self.policy.actor.params());
        put_f64s(&mut out, &self.policy.log_std);
        put_f64s(&mut out, self.policy.critic.params());
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                put_u64(&mut out, adam.t);
                put_f64s(&mut out, &adam.m);
                put_f64s(&mut out, &adam.v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        let mut r = Reader(Cursor::new(bytes));
        let mut magic = [0u8; 4];
        r.fill(&mut magic)?;
        if &magic != MAGIC {
            return Err(LearnError::Checkpoint("not a policy checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(LearnError::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let actor_sizes = r.sizes()?;
        let critic_sizes = r.sizes()?;
        if actor_sizes.first() != Some(&OBS_DIM)
            || actor_sizes.last() != Some(&ACT_DIM)
            || critic_sizes.first() != Some(&OBS_DIM)
            || critic_sizes.last() != Some(&1)
        {
            return Err(LearnError::Shape(format!(
                "checkpoint layer sizes actor {actor_sizes:?} critic {critic_sizes:?} do not fit a 12→6 policy"
            )));
        }
        let mut obs_scale = [0.0; OBS_DIM];
        obs_scale.copy_from_slice(&r.f64s(OBS_DIM)?);
        let env_hash = r.u64()?;
        let env_steps = r.u64()?;
        let eval = RecordedEval { bank: r.u64()?, episodes: r.u64()?, success_rate: r.f64s(1)?[0] };
        let n_scalars = r.u32()? as usize;
        let hyper = Hyperparameters::from_slice(&r.f64s(n_scalars)?)?;
        let text_len = r.u32()? as usize;
        let mut text = vec![0u8; text_len];
        r.fill(&mut text)?;
        let config_text = String::from_utf8(text)
            .map_err(|_| LearnError::Checkpoint("embedded config is not UTF-8".into()))?;
        let actor = Mlp::from_params(&actor_sizes, r.f64s(param_count(&actor_sizes))?)?;
        let mut log_std = [0.0; ACT_DIM];
        log_std.copy_from_slice(&r.f64s(ACT_DIM)?);
        let critic = Mlp::from_params(&critic_sizes, r.f64s(param_count(&critic_sizes))?)?;
        let policy = PolicyNet { actor, log_std, critic, obs_scale };
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let n = policy.param_count();
                let t = r.u64()?;
                let m = r.f64s(n)?;
                let v = r.f64s(n)?;
                let mut adam = Adam::new(n, hyper.lr, 1e-8);
                adam.t = t;
                adam.m = m;
                adam.v = v;
                Some(adam)
            }
            other => return Err(LearnError::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        if (r.0.position() as usize) != bytes.len() {
            return Err(LearnError::Checkpoint("trailing bytes after checkpoint".into()));
        }
        Ok(Self { policy, env_hash, env_steps, eval, hyper, config_text, optimizer })
    }
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<(), LearnError> {
        self.0
            .read_exact(buf)
            .map_err(|_| LearnError::Checkpoint("checkpoint is truncated".into()))
    }

    fn u8(&mut self) -> Result<u8, LearnError> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32, LearnError> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64, LearnError> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, LearnError> {
        let remaining = self.0.get_ref().len() - self.0.position() as usize;
        if n.saturating_mul(8) > remaining {
            return Err(LearnError::Checkpoint("checkpoint is truncated".into()));
        }
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            self.fill(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    }

    fn sizes(&mut self) -> Result<Vec<usize>, LearnError> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(LearnError::Shape(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| self.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        if sizes.iter().any(|&s| s == 0 || s > 1 << 16) {
            return Err(LearnError::Shape(format!("implausible layer sizes {sizes:?}")));
        }
        Ok(sizes)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), LearnError> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, LearnError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let policy = PolicyNet::new(&[16, 8], -0.7, &mut ChaCha8Rng::seed_from_u64(3));
        Checkpoint {
            policy,
            env_hash: 0xDEAD_BEEF,
            env_steps: 12_345,
            eval: RecordedEval { bank: 7, episodes: 100, success_rate: 0.93 },
            hyper: Hyperparameters { f_max: 0.4, tau_max: 0.1, dt: 0.016, gamma: 0.99, lam: 0.95, clip_eps: 0.2, lr: 3e-4 },
            config_text: "seed = 7\n".into(),
            optimizer: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        let bits = |p: &PolicyNet| p.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.policy), bits(&c.policy));
    }

    #[test]
    fn optimizer_state_round_trips() {
        let mut c = sample();
        let n = c.policy.param_count();
        let mut adam = Adam::new(n, 3e-4, 1e-8);
        adam.t = 9;
        adam.m = (0..n).map(|k| k as f64 * 0.5).collect();
        adam.v = (0..n).map(|k| k as f64 * 0.25).collect();
        c.optimizer = Some(adam);
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn truncation_and_corruption_are_errors() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 99;
        assert!(matches!(Checkpoint::from_bytes(&wrong_version), Err(LearnError::Checkpoint(_))));
        let mut wrong_magic = bytes;
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());
    }
}
